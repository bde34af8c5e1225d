#include "icrl/prompt.hpp"

#include <cmath>

#include "icrl/errors.hpp"

namespace icrl {

const char* to_string(PromptMode mode) {
  return mode == PromptMode::sarsa ? "sarsa" : "ac";
}

PromptMode prompt_mode_from_string(const std::string& s) {
  if (s == "sarsa") return PromptMode::sarsa;
  if (s == "ac" || s == "actor_critic") return PromptMode::actor_critic;
  throw ConfigError("unknown mode '" + s + "' (expected sarsa or ac)");
}

Prompt build_sarsa_prompt(const Trajectory& traj, const FeatureMap& features,
                          const Eigen::VectorXd& w, double gamma) {
  const int n = traj.length();
  const int d = features.dim();
  detail::require(n >= 1, "prompt needs at least one transition");
  detail::require(features.kind == FeatureKind::state_action,
                  "SARSA prompt needs state-action features");
  detail::require(w.size() == d, "w dimension does not match the feature map");
  detail::require(traj.states.size() == traj.actions.size() &&
                      traj.states.size() == traj.rewards.size() + 1,
                  "malformed trajectory");

  Prompt p;
  p.mode = PromptMode::sarsa;
  p.layout = BlockLayout::sarsa(d);
  p.n = n;
  p.gamma = gamma;
  p.w = w;
  p.matrix = Eigen::MatrixXd::Zero(p.layout.dim(), n + 1);
  for (int i = 0; i < n; ++i) {
    p.matrix.col(i).segment(0, d) = features.at(traj.states[i], traj.actions[i]);
    p.matrix.col(i).segment(d, d) =
        gamma * features.at(traj.states[i + 1], traj.actions[i + 1]);
    p.matrix(2 * d, i) = traj.rewards[i];
  }
  p.matrix(2 * d + 1, n) = 1.0;
  p.matrix.col(n).tail(d) = w;
  return p;
}

Prompt build_ac_prompt(const Trajectory& traj, const FeatureMap& value_features,
                       const FeatureMap& policy_features, const Eigen::VectorXd& w,
                       const Eigen::VectorXd& lambda, double gamma) {
  const int n = traj.length();
  const int d = value_features.dim();
  const int m = policy_features.dim();
  detail::require(n >= 1, "prompt needs at least one transition");
  detail::require(value_features.kind == FeatureKind::state_value,
                  "AC prompt needs state-value features for the critic");
  detail::require(policy_features.kind == FeatureKind::policy,
                  "AC prompt needs policy features for the actor");
  detail::require(w.size() == d, "w dimension does not match the value features");
  detail::require(lambda.size() == m, "lambda dimension does not match the policy features");
  detail::require(traj.states.size() == traj.actions.size() &&
                      traj.states.size() == traj.rewards.size() + 1,
                  "malformed trajectory");

  Prompt p;
  p.mode = PromptMode::actor_critic;
  p.layout = BlockLayout::actor_critic(d, m);
  p.n = n;
  p.gamma = gamma;
  p.w = w;
  p.lambda = lambda;
  p.matrix = Eigen::MatrixXd::Zero(p.layout.dim(), n + 1);
  double discount = 1.0;
  for (int i = 0; i < n; ++i) {
    p.matrix.col(i).segment(0, d) = value_features.at(traj.states[i]);
    p.matrix.col(i).segment(d, d) = gamma * value_features.at(traj.states[i + 1]);
    p.matrix(2 * d, i) = traj.rewards[i];
    p.matrix.col(i).segment(2 * d + 1, m) =
        discount * score_function(policy_features, lambda, traj.states[i], traj.actions[i]);
    discount *= gamma;
  }
  const int top = p.layout.top();
  p.matrix(top, n) = 1.0;
  p.matrix.col(n).segment(top + 1, m) = lambda;
  p.matrix.col(n).tail(d) = w;
  return p;
}

Eigen::MatrixXd context_moment(const Prompt& prompt) {
  const Eigen::MatrixXd x = prompt.context();
  return (x * x.transpose()) / static_cast<double>(prompt.n);
}

TrajectoryStats trajectory_stats(const Prompt& prompt, const Eigen::VectorXd& w) {
  detail::require(prompt.mode == PromptMode::sarsa, "trajectory_stats needs a SARSA prompt");
  const int d = prompt.layout.d;
  detail::require(w.size() == d, "w dimension does not match the prompt");
  const int n = prompt.n;
  const Eigen::MatrixXd x = prompt.context();  // (2d+1) x n

  TrajectoryStats st;
  st.n = n;
  // x_i' (-w; w; 1) = r + gamma w'phi+ - w'phi
  Eigen::VectorXd td_weights(2 * d + 1);
  td_weights << -w, w, 1.0;
  st.td_errors = x.transpose() * td_weights;
  st.sigma_hat = (x * x.transpose()) / static_cast<double>(n);
  st.regressor = st.sigma_hat.topRows(d);
  st.td_target = (x * st.td_errors) / static_cast<double>(n);
  return st;
}

}  // namespace icrl

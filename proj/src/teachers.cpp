#include "icrl/teachers.hpp"

#include "icrl/errors.hpp"

namespace icrl {

void TeacherConfig::validate() const {
  detail::require_config(alpha > 0.0, "alpha must be positive");
  detail::require_config(beta > 0.0, "beta must be positive");
  detail::require_config(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
}

Eigen::VectorXd sarsa_teacher(const Trajectory& traj, const FeatureMap& features,
                              const Eigen::VectorXd& w, const TeacherConfig& cfg) {
  detail::require(features.kind == FeatureKind::state_action,
                  "SARSA teacher needs state-action features");
  detail::require(w.size() == features.dim(), "w dimension does not match the features");
  const int n = traj.length();
  detail::require(n >= 1, "SARSA teacher needs at least one transition");

  Eigen::VectorXd increment = Eigen::VectorXd::Zero(w.size());
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd phi = features.at(traj.states[i], traj.actions[i]);
    const Eigen::VectorXd phi_next = features.at(traj.states[i + 1], traj.actions[i + 1]);
    const double td = traj.rewards[i] + cfg.gamma * w.dot(phi_next) - w.dot(phi);
    increment += td * phi;
  }
  return w + (cfg.alpha / n) * increment;
}

ActorCriticTarget ac_teacher(const Trajectory& traj, const FeatureMap& value_features,
                             const FeatureMap& policy_features, const Eigen::VectorXd& w,
                             const Eigen::VectorXd& lambda, const TeacherConfig& cfg) {
  detail::require(value_features.kind == FeatureKind::state_value &&
                      policy_features.kind == FeatureKind::policy,
                  "actor-critic teacher needs state-value and policy features");
  detail::require(w.size() == value_features.dim(), "w dimension does not match phi_V");
  detail::require(lambda.size() == policy_features.dim(),
                  "lambda dimension does not match phi_pi");
  const int n = traj.length();
  detail::require(n >= 1, "actor-critic teacher needs at least one transition");

  Eigen::VectorXd critic = Eigen::VectorXd::Zero(w.size());
  Eigen::VectorXd actor = Eigen::VectorXd::Zero(lambda.size());
  double discount = 1.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd phi = value_features.at(traj.states[i]);
    const Eigen::VectorXd phi_next = value_features.at(traj.states[i + 1]);
    const double td = traj.rewards[i] + cfg.gamma * w.dot(phi_next) - w.dot(phi);
    critic += td * phi;
    actor += (discount * td) *
             score_function(policy_features, lambda, traj.states[i], traj.actions[i]);
    discount *= cfg.gamma;
  }
  return {w + (cfg.beta / n) * critic, lambda + (cfg.alpha / n) * actor};
}

}  // namespace icrl

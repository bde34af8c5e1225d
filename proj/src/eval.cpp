#include "icrl/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "icrl/errors.hpp"
#include "icrl/features.hpp"

namespace icrl {

const char* to_string(Agent agent) {
  switch (agent) {
    case Agent::transformer: return "transformer";
    case Agent::teacher: return "teacher";
    case Agent::oracle: return "oracle";
    case Agent::random: return "random";
  }
  return "?";
}

Agent agent_from_string(const std::string& s) {
  for (Agent a : kAllAgents)
    if (s == to_string(a)) return a;
  throw ConfigError("unknown agent '" + s + "'");
}

std::vector<Agent> parse_agents(const std::string& list) {
  std::vector<Agent> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) {
      const Agent a = agent_from_string(item);
      if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
    }
  detail::require_config(!out.empty(), "agent list is empty");
  return out;
}

BlockLayout EvalConfig::layout() const {
  return mode == PromptMode::sarsa ? BlockLayout::sarsa(d) : BlockLayout::actor_critic(d, m);
}

double EvalConfig::truncation_bias() const {
  const double b_r = std::max(std::abs(mdp.reward_low), std::abs(mdp.reward_high));
  return std::pow(mdp.discount, mc_horizon) * b_r / (1.0 - mdp.discount);
}

std::vector<std::string> EvalConfig::validate() const {
  mdp.validate();
  teacher.validate();
  detail::require_config(d >= 1 && (mode == PromptMode::sarsa || m >= 1),
                         "feature dimensions must be positive");
  detail::require_config(window >= 1, "window must be positive");
  detail::require_config(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must lie in [0, 1]");
  detail::require_config(num_test_mdps >= 1, "num_test_mdps must be positive");
  detail::require_config(update_steps >= 0, "update_steps must be non-negative");
  detail::require_config(eval_interval >= 1, "eval_interval must be positive");
  detail::require_config(mc_rollouts >= 1, "mc_rollouts must be positive");
  detail::require_config(mc_horizon >= 0, "mc_horizon must be non-negative");
  detail::require_config(jobs >= 1, "jobs must be positive");
  detail::require_config(!agents.empty(), "no agents selected");
  std::vector<std::string> warnings;
  const double bias = truncation_bias();
  if (bias >= 1e-3) {
    std::ostringstream os;
    os << "Monte-Carlo truncation bias " << bias << " >= 1e-3; raise mc_horizon";
    warnings.push_back(os.str());
  }
  return warnings;
}

EvalConfig EvalConfig::from(const TrainConfig& cfg) {
  EvalConfig e;
  e.mode = cfg.mode;
  e.mdp = cfg.mdp;
  e.d = cfg.d;
  e.m = cfg.m;
  e.window = cfg.window;
  e.epsilon = cfg.epsilon;
  e.teacher = cfg.teacher;
  return e;
}

McEstimate mc_return(const TabularMdp& mdp, const PolicySpec& policy, int rollouts,
                     int horizon, Rng& rng) {
  detail::require(rollouts >= 1, "need at least one rollout");
  detail::require(horizon >= 0, "horizon must be non-negative");
  const Eigen::MatrixXd probs = policy.action_probabilities(mdp.n_states(), mdp.n_actions());
  const Eigen::RowVectorXd start = mdp.initial_dist().transpose();
  std::vector<double> returns(rollouts, 0.0);
  for (int k = 0; k < rollouts; ++k) {
    int s = sample_categorical(start, rng);
    double g = 0.0;
    double disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
      const int a = sample_categorical(probs.row(s), rng);
      const int next = sample_categorical(mdp.transition_row(s, a), rng);
      g += disc * mdp.reward(a, next);
      disc *= mdp.discount();
      s = next;
    }
    returns[k] = g;
  }
  McEstimate est;
  for (double g : returns) est.mean += g;
  est.mean /= rollouts;
  if (rollouts > 1) {
    double ss = 0.0;
    for (double g : returns) ss += (g - est.mean) * (g - est.mean);
    est.std_error = std::sqrt(ss / (rollouts - 1) / rollouts);
  }
  return est;
}

McEstimate mc_return(const TabularMdp& mdp, const PolicySpec& policy, const EvalConfig& cfg,
                     Rng& rng) {
  return mc_return(mdp, policy, cfg.mc_rollouts, cfg.mc_horizon, rng);
}

double percentile(std::vector<double> values, double q) {
  detail::require(!values.empty(), "percentile of an empty set");
  detail::require(q >= 0.0 && q <= 1.0, "percentile rank must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

void aggregate_curves(EvalCurves& curves) {
  const std::size_t n_ck = curves.steps.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Agent a : curves.agents) {
    AggregateCurve& agg = curves.aggregate[static_cast<int>(a)];
    agg = AggregateCurve{};
    for (std::size_t j = 0; j < n_ck; ++j) {
      std::vector<double> vals;
      for (const auto& mc : curves.per_mdp) {
        const auto& r = mc[a].returns;
        if (j < r.size() && std::isfinite(r[j])) vals.push_back(r[j]);
      }
      agg.count.push_back(static_cast<int>(vals.size()));
      if (vals.empty()) {
        agg.mean.push_back(nan);
        agg.p25.push_back(nan);
        agg.p75.push_back(nan);
        continue;
      }
      // summed in sorted order so the MDP order cannot move the last bit
      std::sort(vals.begin(), vals.end());
      double sum = 0.0;
      for (double v : vals) sum += v;
      agg.mean.push_back(sum / static_cast<double>(vals.size()));
      agg.p25.push_back(percentile(vals, 0.25));
      agg.p75.push_back(percentile(vals, 0.75));
    }
  }
}

namespace {

Eigen::VectorXd uniform_vector(int size, Rng& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v(i) = unif(rng);
  return v;
}

}  // namespace

HeldOutProblem draw_held_out(const EvalConfig& cfg, int k) {
  Rng mdp_rng = make_stream(cfg.seed, "eval_mdp", k);
  Rng feat_rng = make_stream(cfg.seed, "eval_features", k);
  TabularMdp mdp = sample_mdp(mdp_rng, cfg.mdp);
  if (cfg.mode == PromptMode::sarsa) {
    FeatureMap phi = sample_features(feat_rng, FeatureKind::state_action,
                                     {cfg.mdp.n_states, cfg.mdp.n_actions, cfg.d});
    Eigen::VectorXd w = uniform_vector(cfg.d, feat_rng);
    return {std::move(mdp), std::move(phi), FeatureMap{}, std::move(w), Eigen::VectorXd()};
  }
  FeatureMap phi_v = sample_features(feat_rng, FeatureKind::state_value,
                                     {cfg.mdp.n_states, cfg.mdp.n_actions, cfg.d});
  FeatureMap phi_pi = sample_features(feat_rng, FeatureKind::policy,
                                      {cfg.mdp.n_states, cfg.mdp.n_actions, cfg.m});
  Eigen::VectorXd lambda = uniform_vector(cfg.m, feat_rng);
  Eigen::VectorXd w = uniform_vector(cfg.d, feat_rng);
  return {std::move(mdp), std::move(phi_v), std::move(phi_pi), std::move(w), std::move(lambda)};
}

PolicySpec deployment_policy(const EvalConfig& cfg, const HeldOutProblem& p,
                             const Eigen::VectorXd& w, const Eigen::VectorXd& lambda) {
  if (cfg.mode == PromptMode::sarsa) return PolicySpec::epsilon_greedy(q_table(p.phi, w), cfg.epsilon);
  return PolicySpec::softmax(logit_table(p.phi_pi, lambda), cfg.epsilon);
}

namespace {

// State of a learning agent: w for SARSA, (lambda, w) for AC.
struct Learner {
  Eigen::VectorXd w;
  Eigen::VectorXd lambda;
};

PolicySpec behaviour(const EvalConfig& cfg, const HeldOutProblem& p, const Learner& l) {
  return deployment_policy(cfg, p, l.w, l.lambda);
}

Rng mc_stream(const EvalConfig& cfg, int k, int checkpoint) {
  return make_stream(derive_seed(cfg.seed, "eval_mc", k), "checkpoint", checkpoint);
}

using UpdateFn = std::function<Learner(const Trajectory&, const Learner&)>;

AgentCurve run_learner(const EvalConfig& cfg, const HeldOutProblem& p, int k,
                       const UpdateFn& update) {
  AgentCurve curve;
  Rng roll_rng = make_stream(cfg.seed, "eval_rollout", k);
  Learner cur{p.w0, p.lambda0};
  int state = sample_categorical(p.mdp.initial_dist().transpose(), roll_rng);
  auto checkpoint = [&](int j) {
    Rng rng = mc_stream(cfg, k, j);
    const McEstimate est = mc_return(p.mdp, behaviour(cfg, p, cur), cfg, rng);
    curve.returns.push_back(est.mean);
    curve.std_errors.push_back(est.std_error);
  };
  checkpoint(0);
  for (int t = 1; t <= cfg.update_steps; ++t) {
    const Trajectory traj = rollout(p.mdp, behaviour(cfg, p, cur), state, cfg.window, roll_rng);
    Learner next = update(traj, cur);
    if (!next.w.allFinite() || (next.lambda.size() > 0 && !next.lambda.allFinite())) {
      curve.truncated = true;
      break;
    }
    cur = std::move(next);
    state = traj.states.back();
    if (t % cfg.eval_interval == 0) checkpoint(t / cfg.eval_interval);
  }
  return curve;
}

MdpCurves eval_one(const AttentionParams& params, const EvalConfig& cfg, int k) {
  const HeldOutProblem p = draw_held_out(cfg, k);
  TeacherConfig teacher = cfg.teacher;
  teacher.gamma = p.mdp.discount();
  const double gamma = p.mdp.discount();
  const int n_ck = cfg.num_checkpoints();
  auto wants = [&](Agent a) {
    return std::find(cfg.agents.begin(), cfg.agents.end(), a) != cfg.agents.end();
  };

  MdpCurves out;
  out.mdp_id = k;
  if (wants(Agent::transformer)) {
    out[Agent::transformer] = run_learner(cfg, p, k, [&](const Trajectory& tr, const Learner& l) {
      if (cfg.mode == PromptMode::sarsa)
        return Learner{readout_sarsa(params, build_sarsa_prompt(tr, p.phi, l.w, gamma)), {}};
      const ActorCriticReadout r =
          readout_ac(params, build_ac_prompt(tr, p.phi, p.phi_pi, l.w, l.lambda, gamma));
      return Learner{r.w, r.lambda};
    });
  }
  if (wants(Agent::teacher)) {
    out[Agent::teacher] = run_learner(cfg, p, k, [&](const Trajectory& tr, const Learner& l) {
      if (cfg.mode == PromptMode::sarsa) return Learner{sarsa_teacher(tr, p.phi, l.w, teacher), {}};
      const ActorCriticTarget t = ac_teacher(tr, p.phi, p.phi_pi, l.w, l.lambda, teacher);
      return Learner{t.w, t.lambda};
    });
  }
  if (wants(Agent::oracle)) {
    const PolicySpec greedy = PolicySpec::greedy(value_iteration(p.mdp, 1e-10));
    Rng rng = make_stream(derive_seed(cfg.seed, "eval_oracle", k), "mc");
    const McEstimate est = mc_return(p.mdp, greedy, cfg, rng);
    out[Agent::oracle].returns.assign(n_ck, est.mean);
    out[Agent::oracle].std_errors.assign(n_ck, est.std_error);
  }
  if (wants(Agent::random)) {
    const PolicySpec uni = PolicySpec::uniform();
    for (int j = 0; j < n_ck; ++j) {
      Rng rng = make_stream(derive_seed(cfg.seed, "eval_random", k), "checkpoint", j);
      const McEstimate est = mc_return(p.mdp, uni, cfg, rng);
      out[Agent::random].returns.push_back(est.mean);
      out[Agent::random].std_errors.push_back(est.std_error);
    }
  }
  return out;
}

}  // namespace

EvalCurves closed_loop_eval(const AttentionParams& params, const EvalConfig& cfg) {
  cfg.validate();
  if (params.layout() != cfg.layout()) {
    std::ostringstream os;
    os << "checkpoint is " << params.dim() << "x" << params.dim() << " (" << to_string(params.layout().mode)
       << ", d=" << params.layout().d << ", m=" << params.layout().m << ") but the evaluation needs D="
       << cfg.layout().dim() << " (" << to_string(cfg.mode) << ", d=" << cfg.d << ", m=" << cfg.m << ")";
    throw ConfigError(os.str());
  }

  EvalCurves curves;
  curves.agents = cfg.agents;
  for (int j = 0; j < cfg.num_checkpoints(); ++j) curves.steps.push_back(j * cfg.eval_interval);
  curves.per_mdp.resize(cfg.num_test_mdps);

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (int k = next++; k < cfg.num_test_mdps; k = next++) {
      try {
        curves.per_mdp[k] = eval_one(params, cfg, k);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n_threads = std::min(cfg.jobs, cfg.num_test_mdps);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  aggregate_curves(curves);
  return curves;
}

}  // namespace icrl

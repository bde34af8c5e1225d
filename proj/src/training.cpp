#include "icrl/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "icrl/errors.hpp"
#include "icrl/features.hpp"
#include "icrl/prompt.hpp"

namespace icrl {

BlockLayout TrainConfig::layout() const {
  return mode == PromptMode::sarsa ? BlockLayout::sarsa(d) : BlockLayout::actor_critic(d, m);
}

void TrainConfig::validate() const {
  mdp.validate();
  detail::require_config(d >= 1, "feature dimension d must be positive");
  detail::require_config(mode == PromptMode::sarsa || m >= 1,
                         "policy feature dimension m must be positive");
  detail::require_config(window >= 1, "window length n must be positive");
  detail::require_config(frames_per_mdp >= 0 && num_mdps >= 0,
                         "frame and MDP counts must be non-negative");
  detail::require_config(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must lie in [0, 1]");
  detail::require_config(learning_rate > 0.0, "learning rate must be positive");
  detail::require_config(lr_decay > 0.0 && lr_decay <= 1.0, "lr decay must lie in (0, 1]");
  detail::require_config(decay_period >= 1, "decay period must be positive");
  detail::require_config(init_gain >= 0.0, "init gain must be non-negative");
  teacher.validate();
}

TrainConfig TrainConfig::desk_scale(PromptMode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.mdp.n_states = 5;
  cfg.mdp.n_actions = 3;
  cfg.mdp.discount = 0.5;
  cfg.window = 10;
  cfg.frames_per_mdp = 200;
  cfg.num_mdps = 200;
  if (mode == PromptMode::sarsa) {
    cfg.d = 15;
  } else {
    cfg.d = 5;
    cfg.m = 8;
  }
  return cfg;
}

TrainConfig TrainConfig::paper_scale(PromptMode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.mdp.n_states = 9;
  cfg.mdp.n_actions = 4;
  cfg.mdp.discount = 0.5;
  cfg.window = 20;
  cfg.frames_per_mdp = 1000;
  cfg.num_mdps = 10000;
  if (mode == PromptMode::sarsa) {
    cfg.d = 36;
  } else {
    cfg.d = 9;
    cfg.m = 36;
  }
  return cfg;
}

AdamState AdamState::zeros(const BlockLayout& layout, const AdamHyper& hyper) {
  const int top = layout.top();
  const int bot = layout.bottom();
  AdamState s;
  s.hyper = hyper;
  s.m_p12 = s.v_p12 = Eigen::MatrixXd::Zero(top, bot);
  s.m_v21 = s.v_v21 = Eigen::MatrixXd::Zero(bot - 1, top);
  s.m_p22 = s.v_p22 = Eigen::MatrixXd::Zero(bot, bot);
  s.m_v22 = s.v_v22 = Eigen::MatrixXd::Zero(bot - 1, bot);
  return s;
}

AttentionParams init_params(const BlockLayout& layout, double gain, Rng& rng) {
  AttentionParams params(layout);
  auto xavier = [&](auto block) {
    const double fan_out = static_cast<double>(block.rows());
    const double fan_in = static_cast<double>(block.cols());
    std::normal_distribution<double> normal(0.0, gain * std::sqrt(2.0 / (fan_in + fan_out)));
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = normal(rng);
  };
  xavier(params.p12());
  xavier(params.v21_bar());
  return params;
}

namespace {

template <typename Block>
void adam_block(Block param, const Eigen::MatrixXd& g, Eigen::MatrixXd& m,
                Eigen::MatrixXd& v, const AdamHyper& h, long step, double lr) {
  m = h.beta1 * m + (1.0 - h.beta1) * g;
  v = h.beta2 * v + (1.0 - h.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + h.eps_hat);
}

}  // namespace

void adam_step(AdamState& state, AttentionParams& params, const GradPair& grads, double lr) {
  if (!grads.all_finite()) throw NumericalError("adam_step: non-finite gradient entries");
  ++state.step;
  const auto& h = state.hyper;
  adam_block(params.p12(), grads.d_p12, state.m_p12, state.v_p12, h, state.step, lr);
  adam_block(params.v21_bar(), grads.d_v21_bar, state.m_v21, state.v_v21, h, state.step, lr);
  if (grads.d_p22)
    adam_block(params.p22(), *grads.d_p22, state.m_p22, state.v_p22, h, state.step, lr);
  if (grads.d_v22_bar)
    adam_block(params.v22_bar(), *grads.d_v22_bar, state.m_v22, state.v_v22, h, state.step, lr);
}

void sgd_step(AttentionParams& params, const GradPair& grads, double lr) {
  if (!grads.all_finite()) throw NumericalError("sgd_step: non-finite gradient entries");
  params.p12() -= lr * grads.d_p12;
  params.v21_bar() -= lr * grads.d_v21_bar;
  if (grads.d_p22) params.p22() -= lr * *grads.d_p22;
  if (grads.d_v22_bar) params.v22_bar() -= lr * *grads.d_v22_bar;
}

double learning_rate_at(const TrainConfig& cfg, int mdp_index) {
  return cfg.learning_rate * std::pow(cfg.lr_decay, mdp_index / cfg.decay_period);
}

double RunReport::tail_mean_loss(std::size_t count) const {
  if (losses.empty()) return 0.0;
  count = std::min(count, losses.size());
  return std::accumulate(losses.end() - static_cast<std::ptrdiff_t>(count), losses.end(), 0.0) /
         static_cast<double>(count);
}

namespace {

Eigen::VectorXd uniform_vector(int size, Rng& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v(i) = unif(rng);
  return v;
}

// One optimisation step shared by both modes. Returns the frame loss, or
// nullopt when the loss is non-finite or above the divergence threshold (in
// which case the parameters are left untouched).
struct StepContext {
  const TrainConfig& cfg;
  AttentionParams& params;
  AdamState& adam;
};

std::optional<double> mimic_step(StepContext& ctx, const Eigen::MatrixXd& sigma,
                                 const Eigen::VectorXd& w_tilde, int n,
                                 const Eigen::VectorXd& target, Eigen::VectorXd* prediction,
                                 double lr) {
  const EffectiveParams eff = EffectiveParams::from(ctx.params);
  const QuadraticBlocks quad = QuadraticBlocks::from(ctx.params);
  GradPair g = bilinear_grad(eff, &quad, sigma, w_tilde, n, target);
  *prediction = bilinear_readout(eff, &quad, sigma, w_tilde, n);
  const double l = loss(*prediction, target);
  if (!std::isfinite(l) || l > ctx.cfg.divergence_threshold) return std::nullopt;
  if (!ctx.cfg.full_parameterization) {
    g.d_p22.reset();
    g.d_v22_bar.reset();
  }
  if (ctx.cfg.optimizer == OptimizerKind::adam)
    adam_step(ctx.adam, ctx.params, g, lr);
  else
    sgd_step(ctx.params, g, lr);
  return l;
}

void finish_mdp(RunReport& report, int k, std::size_t first_frame, double param_norm) {
  MdpSummary s;
  s.index = k;
  const std::size_t count = report.losses.size() - first_frame;
  if (count > 0) {
    s.mean_loss = std::accumulate(report.losses.begin() + static_cast<std::ptrdiff_t>(first_frame),
                                  report.losses.end(), 0.0) /
                  static_cast<double>(count);
    s.final_loss = report.losses.back();
  }
  s.final_param_norm = param_norm;
  report.mdps.push_back(s);
}

std::string divergence_message(int k, int t, double lr) {
  std::ostringstream os;
  os << "loss diverged at mdp " << k << ", frame " << t << " (lr=" << lr
     << "); parameters rolled back to the last good step";
  return os.str();
}

}  // namespace

RunReport train_sarsa(const TrainConfig& cfg, const MdpCallback& on_mdp) {
  detail::require_config(cfg.mode == PromptMode::sarsa, "train_sarsa needs mode = sarsa");
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  RunReport report;
  report.config = cfg;
  Rng init_rng = make_stream(cfg.seed, "init");
  AttentionParams params = init_params(cfg.layout(), cfg.init_gain, init_rng);
  report.initial_params = params;
  AdamState adam = AdamState::zeros(cfg.layout(), cfg.adam);
  StepContext ctx{cfg, params, adam};
  report.losses.reserve(static_cast<std::size_t>(cfg.num_mdps) * cfg.frames_per_mdp);

  const int d = cfg.d;
  for (int k = 0; k < cfg.num_mdps && !report.diverged; ++k) {
    Rng mdp_rng = make_stream(cfg.seed, "mdp", k);
    Rng feat_rng = make_stream(cfg.seed, "features", k);
    Rng roll_rng = make_stream(cfg.seed, "rollout", k);
    const TabularMdp mdp = sample_mdp(mdp_rng, cfg.mdp);
    const FeatureMap phi = sample_features(
        feat_rng, FeatureKind::state_action, {cfg.mdp.n_states, cfg.mdp.n_actions, d});
    Eigen::VectorXd w = uniform_vector(d, feat_rng);
    int state = std::uniform_int_distribution<int>(0, cfg.mdp.n_states - 1)(roll_rng);

    TeacherConfig teacher = cfg.teacher;
    teacher.gamma = mdp.discount();
    const double lr = learning_rate_at(cfg, k);
    const std::size_t first_frame = report.losses.size();

    for (int t = 0; t < cfg.frames_per_mdp; ++t) {
      const PolicySpec policy = PolicySpec::epsilon_greedy(q_table(phi, w), cfg.epsilon);
      const Trajectory traj = rollout(mdp, policy, state, cfg.window, roll_rng);
      const Prompt prompt = build_sarsa_prompt(traj, phi, w, mdp.discount());
      const TrajectoryStats stats = trajectory_stats(prompt, w);
      const Eigen::VectorXd target = sarsa_teacher(traj, phi, w, teacher);

      Eigen::VectorXd prediction;
      const auto l = mimic_step(ctx, stats.sigma_hat, prompt.w_tilde(), prompt.n, target,
                                &prediction, lr);
      if (!l) {
        report.diverged = true;
        report.message = divergence_message(k, t, lr);
        break;
      }
      report.losses.push_back(*l);
      w = cfg.teacher_forcing ? target : prediction;
      state = traj.states.back();
    }
    finish_mdp(report, k, first_frame, w.norm());
    if (on_mdp) on_mdp(k + 1, params);
  }

  report.final_params = params;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

RunReport train_ac(const TrainConfig& cfg, const MdpCallback& on_mdp) {
  detail::require_config(cfg.mode == PromptMode::actor_critic, "train_ac needs mode = ac");
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  RunReport report;
  report.config = cfg;
  Rng init_rng = make_stream(cfg.seed, "init");
  AttentionParams params = init_params(cfg.layout(), cfg.init_gain, init_rng);
  report.initial_params = params;
  AdamState adam = AdamState::zeros(cfg.layout(), cfg.adam);
  StepContext ctx{cfg, params, adam};
  report.losses.reserve(static_cast<std::size_t>(cfg.num_mdps) * cfg.frames_per_mdp);

  const int d = cfg.d;
  const int m = cfg.m;
  for (int k = 0; k < cfg.num_mdps && !report.diverged; ++k) {
    Rng mdp_rng = make_stream(cfg.seed, "mdp", k);
    Rng feat_rng = make_stream(cfg.seed, "features", k);
    Rng roll_rng = make_stream(cfg.seed, "rollout", k);
    const TabularMdp mdp = sample_mdp(mdp_rng, cfg.mdp);
    const FeatureMap phi_v = sample_features(feat_rng, FeatureKind::state_value,
                                             {cfg.mdp.n_states, cfg.mdp.n_actions, d});
    const FeatureMap phi_pi = sample_features(feat_rng, FeatureKind::policy,
                                              {cfg.mdp.n_states, cfg.mdp.n_actions, m});
    Eigen::VectorXd lambda = uniform_vector(m, feat_rng);
    Eigen::VectorXd w = uniform_vector(d, feat_rng);
    int state = std::uniform_int_distribution<int>(0, cfg.mdp.n_states - 1)(roll_rng);

    TeacherConfig teacher = cfg.teacher;
    teacher.gamma = mdp.discount();
    const double lr = learning_rate_at(cfg, k);
    const std::size_t first_frame = report.losses.size();

    for (int t = 0; t < cfg.frames_per_mdp; ++t) {
      const PolicySpec policy = PolicySpec::softmax(logit_table(phi_pi, lambda), cfg.epsilon);
      const Trajectory traj = rollout(mdp, policy, state, cfg.window, roll_rng);
      const Prompt prompt = build_ac_prompt(traj, phi_v, phi_pi, w, lambda, mdp.discount());
      const ActorCriticTarget ac = ac_teacher(traj, phi_v, phi_pi, w, lambda, teacher);
      Eigen::VectorXd target(m + d);
      target << ac.lambda, ac.w;

      Eigen::VectorXd prediction;
      const auto l = mimic_step(ctx, context_moment(prompt), prompt.w_tilde(), prompt.n,
                                target, &prediction, lr);
      if (!l) {
        report.diverged = true;
        report.message = divergence_message(k, t, lr);
        break;
      }
      report.losses.push_back(*l);
      const Eigen::VectorXd& next = cfg.teacher_forcing ? target : prediction;
      lambda = next.head(m);
      w = next.tail(d);
      state = traj.states.back();
    }
    Eigen::VectorXd both(m + d);
    both << lambda, w;
    finish_mdp(report, k, first_frame, both.norm());
    if (on_mdp) on_mdp(k + 1, params);
  }

  report.final_params = params;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

RunReport train(const TrainConfig& cfg, const MdpCallback& on_mdp) {
  return cfg.mode == PromptMode::sarsa ? train_sarsa(cfg, on_mdp) : train_ac(cfg, on_mdp);
}

}  // namespace icrl

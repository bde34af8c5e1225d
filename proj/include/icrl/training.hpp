#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "icrl/attention.hpp"
#include "icrl/mdp.hpp"
#include "icrl/rng.hpp"
#include "icrl/teachers.hpp"

namespace icrl {

enum class OptimizerKind { adam, sgd };

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

/// Everything Algorithm-1/2 style training needs. `d` is the SARSA feature
/// dimension or the critic (phi_V) dimension; `m` is the actor dimension and
/// is ignored in SARSA mode.
struct TrainConfig {
  PromptMode mode = PromptMode::sarsa;
  MdpConfig mdp;
  int d = 15;
  int m = 8;
  int window = 10;           // n
  int frames_per_mdp = 200;  // T
  int num_mdps = 200;        // K
  double epsilon = 0.1;
  double learning_rate = 1e-3;
  double lr_decay = 0.99;
  int decay_period = 10;
  TeacherConfig teacher;
  double init_gain = 0.1;
  std::uint64_t seed = 0;
  bool full_parameterization = false;
  bool teacher_forcing = true;
  OptimizerKind optimizer = OptimizerKind::adam;
  AdamHyper adam;
  double divergence_threshold = 1e6;

  BlockLayout layout() const;
  void validate() const;

  /// n_S=5, n_A=3, d=15 (SARSA) or d=5, m=8 (AC), n=10, T=200, K=200.
  static TrainConfig desk_scale(PromptMode mode);
  /// n_S=9, n_A=4, d=36 (SARSA) or d=9, m=36 (AC), n=20, T=1000, K=10000.
  static TrainConfig paper_scale(PromptMode mode);
};

struct AdamState {
  AdamHyper hyper;
  long step = 0;
  Eigen::MatrixXd m_p12, v_p12;
  Eigen::MatrixXd m_v21, v_v21;
  Eigen::MatrixXd m_p22, v_p22;
  Eigen::MatrixXd m_v22, v_v22;

  static AdamState zeros(const BlockLayout& layout, const AdamHyper& hyper = {});
};

/// Inert blocks zero; P12 and V21_bar Xavier-normal with the given gain.
AttentionParams init_params(const BlockLayout& layout, double gain, Rng& rng);

/// Bias-corrected Adam on the blocks present in `grads`. Throws
/// NumericalError on non-finite gradient entries.
void adam_step(AdamState& state, AttentionParams& params, const GradPair& grads, double lr);

/// theta <- theta - lr * grad on the blocks present in `grads`.
void sgd_step(AttentionParams& params, const GradPair& grads, double lr);

struct MdpSummary {
  int index = 0;
  double mean_loss = 0.0;
  double final_loss = 0.0;
  double final_param_norm = 0.0;  // ||w|| (SARSA) or ||(lambda; w)|| (AC)
};

struct RunReport {
  TrainConfig config;
  std::vector<double> losses;  // one per frame, K*T on success
  std::vector<MdpSummary> mdps;
  AttentionParams initial_params;
  AttentionParams final_params;
  double wall_seconds = 0.0;
  bool diverged = false;
  std::string message;

  /// Mean of the last `count` frame losses.
  double tail_mean_loss(std::size_t count) const;
};

/// Called after each MDP with (mdps completed, current parameters).
using MdpCallback = std::function<void(int, const AttentionParams&)>;

RunReport train_sarsa(const TrainConfig& cfg, const MdpCallback& on_mdp = {});
RunReport train_ac(const TrainConfig& cfg, const MdpCallback& on_mdp = {});
RunReport train(const TrainConfig& cfg, const MdpCallback& on_mdp = {});

/// Learning rate in force while training MDP k.
double learning_rate_at(const TrainConfig& cfg, int mdp_index);

}  // namespace icrl

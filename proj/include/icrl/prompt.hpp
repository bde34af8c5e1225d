#pragma once

#include <Eigen/Dense>

#include "icrl/features.hpp"
#include "icrl/mdp.hpp"

namespace icrl {

enum class PromptMode { sarsa, actor_critic };

/// Row partition shared by prompts and attention parameters.
///
/// SARSA:  D = 3d + 2, top block = 2d + 1 rows (x_i), bottom = d + 1 (w~).
/// AC:     D = 3d + 2m + 2, top = 2d + m + 1, bottom = d + m + 1 (1; lambda; w).
/// The readout is the last d (SARSA) or d + m (AC) rows of the final column.
struct BlockLayout {
  PromptMode mode = PromptMode::sarsa;
  int d = 1;
  int m = 0;

  static BlockLayout sarsa(int d) { return {PromptMode::sarsa, d, 0}; }
  static BlockLayout actor_critic(int d, int m) { return {PromptMode::actor_critic, d, m}; }

  int top() const { return 2 * d + m + 1; }
  int bottom() const { return d + m + 1; }
  int dim() const { return top() + bottom(); }
  int readout() const { return d + m; }

  bool operator==(const BlockLayout&) const = default;
};

const char* to_string(PromptMode mode);
PromptMode prompt_mode_from_string(const std::string& s);

struct Prompt {
  PromptMode mode = PromptMode::sarsa;
  BlockLayout layout;
  int n = 0;
  double gamma = 0.0;
  Eigen::MatrixXd matrix;  // D x (n + 1)
  Eigen::VectorXd w;
  Eigen::VectorXd lambda;  // empty in SARSA mode

  /// First n columns of the top block: the x_i (plus score rows in AC mode).
  auto context() const { return matrix.topLeftCorner(layout.top(), n); }
  /// Bottom block of the last column: (1; w) or (1; lambda; w).
  Eigen::VectorXd w_tilde() const {
    return matrix.col(n).tail(layout.bottom());
  }
};

/// Columns (phi_i; gamma phi_i+; r_{i+1}; 0) and final column (0; 1; w).
Prompt build_sarsa_prompt(const Trajectory& traj, const FeatureMap& features,
                          const Eigen::VectorXd& w, double gamma);

/// Columns (phi_V(s_i); gamma phi_V(s_{i+1}); r_{i+1}; gamma^i g_lambda(s_i,a_i); 0)
/// and final column (0; 1; lambda; w).
Prompt build_ac_prompt(const Trajectory& traj, const FeatureMap& value_features,
                       const FeatureMap& policy_features, const Eigen::VectorXd& w,
                       const Eigen::VectorXd& lambda, double gamma);

struct TrajectoryStats {
  Eigen::MatrixXd sigma_hat;  // (2d+1) x (2d+1)
  Eigen::MatrixXd regressor;  // d x (2d+1)
  Eigen::VectorXd td_target;  // 2d+1
  Eigen::VectorXd td_errors;  // n
  int n = 0;
};

TrajectoryStats trajectory_stats(const Prompt& prompt, const Eigen::VectorXd& w);

/// Second moment (1/n) sum_i h_i h_i' of the context columns, for either mode.
Eigen::MatrixXd context_moment(const Prompt& prompt);

}  // namespace icrl

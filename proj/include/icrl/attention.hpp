#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "icrl/prompt.hpp"

namespace icrl {

/// One-layer single-head linear self-attention parameters (P = Q'K merged, V).
///
/// Block views follow the partition of BlockLayout:
///   P = [P11 P12; P21 P22],  V = [V11 V12; V21 V22]
/// with P11 top x top and P22 bottom x bottom. V21_bar / V22_bar drop the
/// first row of V21 / V22 (the row facing the constant 1 of w~). Views alias
/// the parent matrices.
class AttentionParams {
 public:
  AttentionParams() = default;
  explicit AttentionParams(BlockLayout layout);
  AttentionParams(BlockLayout layout, Eigen::MatrixXd p, Eigen::MatrixXd v);

  const BlockLayout& layout() const { return layout_; }
  int dim() const { return layout_.dim(); }

  Eigen::MatrixXd& p() { return p_; }
  Eigen::MatrixXd& v() { return v_; }
  const Eigen::MatrixXd& p() const { return p_; }
  const Eigen::MatrixXd& v() const { return v_; }

  auto p11() { return p_.topLeftCorner(top(), top()); }
  auto p12() { return p_.topRightCorner(top(), bottom()); }
  auto p21() { return p_.bottomLeftCorner(bottom(), top()); }
  auto p22() { return p_.bottomRightCorner(bottom(), bottom()); }
  auto v11() { return v_.topLeftCorner(top(), top()); }
  auto v12() { return v_.topRightCorner(top(), bottom()); }
  auto v21() { return v_.bottomLeftCorner(bottom(), top()); }
  auto v22() { return v_.bottomRightCorner(bottom(), bottom()); }
  auto v21_bar() { return v_.bottomLeftCorner(bottom() - 1, top()); }
  auto v22_bar() { return v_.bottomRightCorner(bottom() - 1, bottom()); }

  auto p11() const { return p_.topLeftCorner(top(), top()); }
  auto p12() const { return p_.topRightCorner(top(), bottom()); }
  auto p21() const { return p_.bottomLeftCorner(bottom(), top()); }
  auto p22() const { return p_.bottomRightCorner(bottom(), bottom()); }
  auto v11() const { return v_.topLeftCorner(top(), top()); }
  auto v12() const { return v_.topRightCorner(top(), bottom()); }
  auto v21() const { return v_.bottomLeftCorner(bottom(), top()); }
  auto v22() const { return v_.bottomRightCorner(bottom(), bottom()); }
  auto v21_bar() const { return v_.bottomLeftCorner(bottom() - 1, top()); }
  auto v22_bar() const { return v_.bottomRightCorner(bottom() - 1, bottom()); }

 private:
  int top() const { return layout_.top(); }
  int bottom() const { return layout_.bottom(); }

  BlockLayout layout_;
  Eigen::MatrixXd p_;
  Eigen::MatrixXd v_;
};

/// theta_eff = (P12, V21_bar): the only blocks that reach the readout when
/// P22 = V22_bar = 0.
struct EffectiveParams {
  Eigen::MatrixXd p12;
  Eigen::MatrixXd v21_bar;

  static EffectiveParams from(const AttentionParams& params);
  void write_to(AttentionParams& params) const;
  double squared_norm() const { return p12.squaredNorm() + v21_bar.squaredNorm(); }
};

/// The (P22, V22_bar) pair, which contributes a cubic term in w~.
struct QuadraticBlocks {
  Eigen::MatrixXd p22;
  Eigen::MatrixXd v22_bar;

  static QuadraticBlocks from(const AttentionParams& params);
};

struct GradPair {
  Eigen::MatrixXd d_p12;
  Eigen::MatrixXd d_v21_bar;
  std::optional<Eigen::MatrixXd> d_p22;
  std::optional<Eigen::MatrixXd> d_v22_bar;

  double squared_norm() const;
  bool all_finite() const;
};

/// H_out = H + (1/n) (V H)(H' P H), with n the trajectory length.
Eigen::MatrixXd attention_forward(const AttentionParams& params, const Prompt& prompt);

/// Last d entries of the final output column.
Eigen::VectorXd readout_sarsa(const AttentionParams& params, const Prompt& prompt);

struct ActorCriticReadout {
  Eigen::VectorXd lambda;
  Eigen::VectorXd w;
};

/// Last d + m entries of the final output column, split as (lambda, w).
ActorCriticReadout readout_ac(const AttentionParams& params, const Prompt& prompt);

/// Closed-form readout  w + V21_bar Sigma P12 w~ + (1/n) V22_bar w~ w~' P22 w~.
Eigen::VectorXd decompose_output(const EffectiveParams& effective,
                                 const TrajectoryStats& stats, const Eigen::VectorXd& w,
                                 const Eigen::MatrixXd& p22, const Eigen::MatrixXd& v22_bar);
Eigen::VectorXd decompose_output(const EffectiveParams& effective,
                                 const TrajectoryStats& stats, const Eigen::VectorXd& w);

/// Mode-agnostic form of the same decomposition. `sigma` is the context
/// moment and `w_tilde` the bottom block of the last prompt column; the
/// result is tail(w_tilde) plus the attention increment.
Eigen::VectorXd bilinear_readout(const EffectiveParams& effective,
                                 const QuadraticBlocks* quadratic,
                                 const Eigen::MatrixXd& sigma,
                                 const Eigen::VectorXd& w_tilde, int n);

/// 1/2 ||prediction - target||^2.
double loss(const Eigen::VectorXd& prediction, const Eigen::VectorXd& target);

/// Single-sample gradient of the mimicry loss w.r.t. (P12, V21_bar), and
/// (P22, V22_bar) when `quadratic` is given.
GradPair grad_loss(const EffectiveParams& effective, const TrajectoryStats& stats,
                   const Eigen::VectorXd& w, const Eigen::VectorXd& target,
                   const QuadraticBlocks* quadratic = nullptr);

/// Same gradient for an actor-critic prompt; `target` is stacked (lambda; w).
GradPair grad_loss_ac(const EffectiveParams& effective, const Prompt& prompt,
                      const Eigen::VectorXd& target,
                      const QuadraticBlocks* quadratic = nullptr);

/// Shared implementation behind grad_loss / grad_loss_ac.
GradPair bilinear_grad(const EffectiveParams& effective, const QuadraticBlocks* quadratic,
                       const Eigen::MatrixXd& sigma, const Eigen::VectorXd& w_tilde,
                       int n, const Eigen::VectorXd& target);

}  // namespace icrl

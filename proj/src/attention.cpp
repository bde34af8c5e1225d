#include "icrl/attention.hpp"

#include "icrl/errors.hpp"

namespace icrl {

AttentionParams::AttentionParams(BlockLayout layout)
    : layout_(layout),
      p_(Eigen::MatrixXd::Zero(layout.dim(), layout.dim())),
      v_(Eigen::MatrixXd::Zero(layout.dim(), layout.dim())) {}

AttentionParams::AttentionParams(BlockLayout layout, Eigen::MatrixXd p, Eigen::MatrixXd v)
    : layout_(layout), p_(std::move(p)), v_(std::move(v)) {
  detail::require(p_.rows() == layout_.dim() && p_.cols() == layout_.dim() &&
                      v_.rows() == layout_.dim() && v_.cols() == layout_.dim(),
                  "P and V must be D x D for the block layout");
}

EffectiveParams EffectiveParams::from(const AttentionParams& params) {
  return {params.p12(), params.v21_bar()};
}

void EffectiveParams::write_to(AttentionParams& params) const {
  detail::require(p12.rows() == params.p12().rows() && p12.cols() == params.p12().cols() &&
                      v21_bar.rows() == params.v21_bar().rows() &&
                      v21_bar.cols() == params.v21_bar().cols(),
                  "effective parameter shapes do not match the layout");
  params.p12() = p12;
  params.v21_bar() = v21_bar;
}

QuadraticBlocks QuadraticBlocks::from(const AttentionParams& params) {
  return {params.p22(), params.v22_bar()};
}

double GradPair::squared_norm() const {
  double s = d_p12.squaredNorm() + d_v21_bar.squaredNorm();
  if (d_p22) s += d_p22->squaredNorm();
  if (d_v22_bar) s += d_v22_bar->squaredNorm();
  return s;
}

bool GradPair::all_finite() const {
  return d_p12.allFinite() && d_v21_bar.allFinite() &&
         (!d_p22 || d_p22->allFinite()) && (!d_v22_bar || d_v22_bar->allFinite());
}

Eigen::MatrixXd attention_forward(const AttentionParams& params, const Prompt& prompt) {
  detail::require(params.layout() == prompt.layout,
                  "attention parameters and prompt use different layouts");
  const Eigen::MatrixXd& h = prompt.matrix;
  detail::require(h.rows() == params.dim(), "prompt height does not match D");
  const Eigen::MatrixXd vh = params.v() * h;
  const Eigen::MatrixXd scores = h.transpose() * (params.p() * h);
  return h + (vh * scores) / static_cast<double>(prompt.n);
}

Eigen::VectorXd readout_sarsa(const AttentionParams& params, const Prompt& prompt) {
  detail::require(prompt.mode == PromptMode::sarsa, "readout_sarsa needs a SARSA prompt");
  const Eigen::MatrixXd out = attention_forward(params, prompt);
  return out.col(prompt.n).tail(prompt.layout.d);
}

ActorCriticReadout readout_ac(const AttentionParams& params, const Prompt& prompt) {
  detail::require(prompt.mode == PromptMode::actor_critic,
                  "readout_ac needs an actor-critic prompt");
  const Eigen::MatrixXd out = attention_forward(params, prompt);
  const Eigen::VectorXd tail = out.col(prompt.n).tail(prompt.layout.readout());
  return {tail.head(prompt.layout.m), tail.tail(prompt.layout.d)};
}

Eigen::VectorXd bilinear_readout(const EffectiveParams& eff, const QuadraticBlocks* quad,
                                 const Eigen::MatrixXd& sigma,
                                 const Eigen::VectorXd& w_tilde, int n) {
  detail::require(eff.p12.rows() == sigma.rows() && eff.p12.cols() == w_tilde.size() &&
                      eff.v21_bar.cols() == sigma.cols() &&
                      eff.v21_bar.rows() == w_tilde.size() - 1,
                  "effective parameter shapes do not match the prompt");
  Eigen::VectorXd out = w_tilde.tail(w_tilde.size() - 1);
  out.noalias() += eff.v21_bar * (sigma * (eff.p12 * w_tilde));
  if (quad != nullptr) {
    const double cubic = w_tilde.dot(quad->p22 * w_tilde);
    out.noalias() += (cubic / n) * (quad->v22_bar * w_tilde);
  }
  return out;
}

namespace {

Eigen::VectorXd sarsa_w_tilde(const Eigen::VectorXd& w) {
  Eigen::VectorXd wt(w.size() + 1);
  wt << 1.0, w;
  return wt;
}

}  // namespace

Eigen::VectorXd decompose_output(const EffectiveParams& effective,
                                 const TrajectoryStats& stats, const Eigen::VectorXd& w,
                                 const Eigen::MatrixXd& p22, const Eigen::MatrixXd& v22_bar) {
  const QuadraticBlocks quad{p22, v22_bar};
  return bilinear_readout(effective, &quad, stats.sigma_hat, sarsa_w_tilde(w), stats.n);
}

Eigen::VectorXd decompose_output(const EffectiveParams& effective,
                                 const TrajectoryStats& stats, const Eigen::VectorXd& w) {
  return bilinear_readout(effective, nullptr, stats.sigma_hat, sarsa_w_tilde(w), stats.n);
}

double loss(const Eigen::VectorXd& prediction, const Eigen::VectorXd& target) {
  detail::require(prediction.size() == target.size(), "loss needs equal dimensions");
  return 0.5 * (prediction - target).squaredNorm();
}

GradPair bilinear_grad(const EffectiveParams& eff, const QuadraticBlocks* quad,
                       const Eigen::MatrixXd& sigma, const Eigen::VectorXd& w_tilde,
                       int n, const Eigen::VectorXd& target) {
  const Eigen::VectorXd pred = bilinear_readout(eff, quad, sigma, w_tilde, n);
  detail::require(pred.size() == target.size(), "target dimension mismatch");
  const Eigen::VectorXd e = pred - target;

  GradPair g;
  const Eigen::VectorXd sigma_p_w = sigma * (eff.p12 * w_tilde);
  g.d_v21_bar = e * sigma_p_w.transpose();
  g.d_p12 = (sigma.transpose() * (eff.v21_bar.transpose() * e)) * w_tilde.transpose();
  if (quad != nullptr) {
    const double cubic = w_tilde.dot(quad->p22 * w_tilde);
    g.d_v22_bar = ((cubic / n) * e) * w_tilde.transpose();
    const double coupling = e.dot(quad->v22_bar * w_tilde) / n;
    g.d_p22 = coupling * (w_tilde * w_tilde.transpose());
  }
  return g;
}

GradPair grad_loss(const EffectiveParams& effective, const TrajectoryStats& stats,
                   const Eigen::VectorXd& w, const Eigen::VectorXd& target,
                   const QuadraticBlocks* quadratic) {
  return bilinear_grad(effective, quadratic, stats.sigma_hat, sarsa_w_tilde(w), stats.n,
                       target);
}

GradPair grad_loss_ac(const EffectiveParams& effective, const Prompt& prompt,
                      const Eigen::VectorXd& target, const QuadraticBlocks* quadratic) {
  detail::require(prompt.mode == PromptMode::actor_critic,
                  "grad_loss_ac needs an actor-critic prompt");
  return bilinear_grad(effective, quadratic, context_moment(prompt), prompt.w_tilde(),
                       prompt.n, target);
}

}  // namespace icrl

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "icrl/attention.hpp"
#include "icrl/prompt.hpp"
#include "icrl/rng.hpp"
#include "icrl/teachers.hpp"
#include "icrl/training.hpp"

namespace icrl {

/// Exact weights implementing the teacher update, scaled by c:
/// (c P*, c^{-1} V*), with the free blocks set to zero.
struct OptimalConstruction {
  BlockLayout layout;
  double c = 1.0;
  double alpha = 0.0;
  double beta = 0.0;
  Eigen::MatrixXd p12_star;      // canonical (c = 1)
  Eigen::MatrixXd v21_bar_star;  // canonical (c = 1)
  AttentionParams params;        // full D x D at scale c

  EffectiveParams canonical() const { return {p12_star, v21_bar_star}; }
  EffectiveParams scaled(double scale) const {
    return {scale * p12_star, v21_bar_star / scale};
  }
};

OptimalConstruction construct_sarsa_optimal(int d, double alpha, double c = 1.0);
OptimalConstruction construct_ac_optimal(int d, int m, double alpha, double beta,
                                         double c = 1.0);

struct ManifoldProjection {
  double c_hat = 1.0;
  Eigen::MatrixXd u;  // P12 - c_hat P12*
  Eigen::MatrixXd w;  // V21_bar - V21_bar* / c_hat
  double distance = 0.0;
  bool flipped = false;  // minimiser found on the c < 0 branch
  /// <U, P12*> - c^{-2} <W, V21_bar*>; zero at an interior minimiser.
  double normal_residual = 0.0;
};

/// Squared distance from `effective` to (c P12*, c^{-1} V21_bar*).
double manifold_gap(const EffectiveParams& effective, const EffectiveParams& canonical,
                    double c);

/// Closest point on the scaling manifold over |c| in [c_lo, c_hi]; both sign
/// branches are searched and the smaller distance wins.
ManifoldProjection project_to_manifold(const EffectiveParams& effective,
                                       const OptimalConstruction& canonical,
                                       double c_lo = 0.05, double c_hi = 20.0);

struct InertBlockReport {
  bool unchanged = true;
  std::vector<std::string> differences;  // "P11(r,c)" style coordinates
};

/// Bitwise comparison of P11, P21, V11, V12 and the first rows of V21, V22.
InertBlockReport check_inert_blocks(const AttentionParams& before,
                                    const AttentionParams& after);

struct StructureMetrics {
  ManifoldProjection projection;
  double cos_p12 = 0.0;
  double cos_v21 = 0.0;
  double off_pattern_mass = 0.0;
};

StructureMetrics structure_recovery_metrics(const EffectiveParams& learned,
                                            const OptimalConstruction& canonical,
                                            double c_lo = 0.05, double c_hi = 20.0);

// ---------------------------------------------------------------------------
// Mimicry samples and frozen batches (population-loss proxy)

/// One SARSA training sample z with its teacher target.
struct MimicSample {
  Prompt prompt;
  TrajectoryStats stats;
  Eigen::VectorXd w;
  Eigen::VectorXd target;

  Eigen::VectorXd w_tilde() const;
};

struct SamplerConfig {
  MdpConfig mdp;
  int d = 15;
  int window = 10;
  double epsilon = 0.1;
  double alpha = 0.2;

  static SamplerConfig from(const TrainConfig& cfg);
};

/// Fresh MDP, features, w ~ Unif(-1,1)^d and start state per draw; the window
/// is rolled out under the epsilon-greedy policy of w.
MimicSample sample_sarsa_mimic(const SamplerConfig& cfg, Rng& rng);

using MimicSampler = std::function<MimicSample(Rng&)>;

class MimicBatch {
 public:
  MimicBatch() = default;
  explicit MimicBatch(std::vector<MimicSample> samples) : samples_(std::move(samples)) {}

  static MimicBatch draw(const MimicSampler& sampler, int size, Rng& rng);

  const std::vector<MimicSample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }

  /// Mean of 1/2 ||readout - target||^2 over the batch.
  double loss(const EffectiveParams& eff) const;
  /// Mean single-sample gradient over the batch.
  GradPair gradient(const EffectiveParams& eff) const;

 private:
  std::vector<MimicSample> samples_;
};

// ---------------------------------------------------------------------------
// Local PL constants

struct PlInputs {
  double b_phi = 0.0;
  double b_r = 0.0;
  double b_w_tilde = 0.0;
  double kappa_w_tilde = 0.0;
  double kappa_r = 0.0;
  double kappa_q = 0.0;
  double rho = 0.0;
  double alpha = 0.2;
  double c_minus = 0.05;
  double c_plus = 20.0;
  double r = 0.0;
  int d = 1;
};

struct PLConstants {
  PlInputs inputs;
  double b_sigma = 0.0;
  double c_q = 0.0;
  double m0 = 0.0;
  double big_m0 = 0.0;
  double r_max = 0.0;  // sqrt(m0) / (3 C_Q)
  double mu_r = 0.0;
  double k_r = 0.0;
  double lambda_r = 0.0;
  bool in_regime = false;
  std::vector<std::string> violations;
};

/// The closed-form constants of the local convergence result.
PLConstants derive_pl_constants(const PlInputs& inputs);

struct PlEstimateOptions {
  int n_samples = 512;
  double alpha = 0.2;
  double c_lo = 0.05;
  double c_hi = 20.0;
  double r = 0.0;
  int rho_directions = 200;
};

/// Monte-Carlo estimates of the boundedness / excitation constants and rho,
/// then derive_pl_constants(). Singular moments are reported as violations.
PLConstants estimate_pl_constants(const MimicSampler& sampler,
                                  const PlEstimateOptions& options, Rng& rng);

struct PlLogEntry {
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct PlTrajectoryReport {
  std::vector<double> ratio;        // 1/2 |grad|^2 / L, NaN when skipped
  std::vector<double> running_min;  // NaN until the first counted step
  double empirical_pl = std::numeric_limits<double>::infinity();
  int violations = 0;
  int skipped = 0;
  double fitted_rate = 0.0;  // -slope of the log-loss fit
  double fit_r_squared = 0.0;
};

/// Steps with L < 1e-14 count as "at optimum" and are skipped.
PlTrajectoryReport pl_trajectory_check(const std::vector<PlLogEntry>& log,
                                       std::optional<double> mu_r = std::nullopt);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

LinearFit fit_log_linear(const std::vector<double>& values);

/// Max elementwise |transformer readout - teacher update| over `n_prompts`
/// prompts drawn like training data (either mode).
double teacher_equivalence_residual(const AttentionParams& params, const TrainConfig& cfg,
                                    int n_prompts, Rng& rng);

// ---------------------------------------------------------------------------
// Local convergence probe: plain gradient descent on a frozen batch started at
// theta*_eff plus a normal-space perturbation.

struct LocalProbeConfig {
  SamplerConfig sampler;
  int batch_size = 256;
  double noise_norm = 0.05;
  double c0 = 1.0;
  int steps = 2000;
  double step_size = 0.0;  // <= 0: 1 / (largest Hessian eigenvalue at theta*)
  std::uint64_t seed = 0;
};

struct LocalProbeResult {
  std::vector<double> loss;
  std::vector<double> grad_norm;
  std::vector<double> distance;
  PlTrajectoryReport pl;
  LinearFit fit;
  double step_size = 0.0;
  double hessian_max_eig = 0.0;
};

/// Random normal-space direction at c with Frobenius norm `norm`.
EffectiveParams normal_perturbation(const EffectiveParams& canonical, double c, double norm,
                                    Rng& rng);

/// Largest curvature of the batch loss at `at` (power iteration on
/// finite-difference Hessian-vector products).
double batch_hessian_max_eig(const MimicBatch& batch, const EffectiveParams& at, Rng& rng,
                             int iterations = 40);

LocalProbeResult run_local_probe(const LocalProbeConfig& cfg);

/// Plain gradient descent from `start` on a frozen batch, logging loss,
/// gradient norm and manifold distance before every step.
LocalProbeResult gradient_descent_log(const MimicBatch& batch, EffectiveParams start,
                                      const OptimalConstruction& canonical, int steps,
                                      double step_size);

}  // namespace icrl

#include "icrl/theory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "icrl/errors.hpp"
#include "icrl/features.hpp"

namespace icrl {

OptimalConstruction construct_sarsa_optimal(int d, double alpha, double c) {
  detail::require(d >= 1, "d must be positive");
  detail::require(alpha > 0.0, "alpha must be positive");
  detail::require(c != 0.0, "scale c must be non-zero");
  OptimalConstruction oc;
  oc.layout = BlockLayout::sarsa(d);
  oc.c = c;
  oc.alpha = alpha;
  const int top = oc.layout.top();
  const int bot = oc.layout.bottom();

  // P12* = [0 -I; 0 I; 1 0]: x_i' P12* w~ is the TD error delta_i.
  oc.p12_star = Eigen::MatrixXd::Zero(top, bot);
  oc.p12_star.block(0, 1, d, d) = -Eigen::MatrixXd::Identity(d, d);
  oc.p12_star.block(d, 1, d, d) = Eigen::MatrixXd::Identity(d, d);
  oc.p12_star(2 * d, 0) = 1.0;
  // V21_bar* = [alpha I 0 0]: picks alpha phi_i out of x_i.
  oc.v21_bar_star = Eigen::MatrixXd::Zero(d, top);
  oc.v21_bar_star.block(0, 0, d, d) = alpha * Eigen::MatrixXd::Identity(d, d);

  oc.params = AttentionParams(oc.layout);
  oc.scaled(c).write_to(oc.params);
  return oc;
}

OptimalConstruction construct_ac_optimal(int d, int m, double alpha, double beta, double c) {
  detail::require(d >= 1 && m >= 1, "d and m must be positive");
  detail::require(alpha > 0.0 && beta > 0.0, "step sizes must be positive");
  detail::require(c != 0.0, "scale c must be non-zero");
  OptimalConstruction oc;
  oc.layout = BlockLayout::actor_critic(d, m);
  oc.c = c;
  oc.alpha = alpha;
  oc.beta = beta;
  const int top = oc.layout.top();
  const int bot = oc.layout.bottom();

  // columns of P12 face w~ = (1; lambda; w)
  oc.p12_star = Eigen::MatrixXd::Zero(top, bot);
  oc.p12_star.block(0, 1 + m, d, d) = -Eigen::MatrixXd::Identity(d, d);
  oc.p12_star.block(d, 1 + m, d, d) = Eigen::MatrixXd::Identity(d, d);
  oc.p12_star(2 * d, 0) = 1.0;
  // rows of V21_bar produce (lambda; w): alpha on the score rows, beta on phi_V
  oc.v21_bar_star = Eigen::MatrixXd::Zero(d + m, top);
  oc.v21_bar_star.block(0, 2 * d + 1, m, m) = alpha * Eigen::MatrixXd::Identity(m, m);
  oc.v21_bar_star.block(m, 0, d, d) = beta * Eigen::MatrixXd::Identity(d, d);

  oc.params = AttentionParams(oc.layout);
  oc.scaled(c).write_to(oc.params);
  return oc;
}

double manifold_gap(const EffectiveParams& eff, const EffectiveParams& canon, double c) {
  return (eff.p12 - c * canon.p12).squaredNorm() +
         (eff.v21_bar - canon.v21_bar / c).squaredNorm();
}

namespace {

// f(c) = |P - cA|^2 + |V - B/c|^2 expanded in the six inner products, for c > 0.
// The c < 0 branch is the same function with the cross terms negated.
struct GapPolynomial {
  double pp, pa, aa, vv, vb, bb;

  double value(double c) const {
    return pp - 2.0 * c * pa + c * c * aa + vv - 2.0 * vb / c + bb / (c * c);
  }
  double slope(double c) const {
    return -2.0 * pa + 2.0 * c * aa + 2.0 * vb / (c * c) - 2.0 * bb / (c * c * c);
  }
};

double minimise_on_interval(const GapPolynomial& f, double lo, double hi) {
  // coarse log-spaced scan to bracket the global minimiser
  constexpr int kGrid = 400;
  const double llo = std::log(lo);
  const double lhi = std::log(hi);
  auto grid = [&](int i) {
    return i == kGrid ? hi : std::exp(llo + (lhi - llo) * i / kGrid);
  };
  int best = 0;
  double best_val = f.value(lo);
  for (int i = 1; i <= kGrid; ++i) {
    const double v = f.value(grid(i));
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  double a = grid(std::max(best - 1, 0));
  double b = grid(std::min(best + 1, kGrid));

  // golden-section inside the bracket
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f.value(x1);
  double f2 = f.value(x2);
  for (int it = 0; it < 200 && (b - a) > 1e-13 * std::max(1.0, b); ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f.value(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f.value(x2);
    }
  }
  double c = 0.5 * (a + b);

  // derivative bisection polish when the slope changes sign across a widened bracket
  double l = std::max(lo, c - 1e-6 * c);
  double r = std::min(hi, c + 1e-6 * c);
  if (f.slope(l) < 0.0 && f.slope(r) > 0.0) {
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (l + r);
      (f.slope(mid) < 0.0 ? l : r) = mid;
    }
    c = 0.5 * (l + r);
  }
  for (double edge : {lo, hi})
    if (f.value(edge) < f.value(c)) c = edge;
  return c;
}

}  // namespace

ManifoldProjection project_to_manifold(const EffectiveParams& eff,
                                       const OptimalConstruction& canonical, double c_lo,
                                       double c_hi) {
  detail::require(c_lo > 0.0, "c interval must be positive");
  detail::require(c_hi >= c_lo, "c interval is empty");
  const EffectiveParams canon = canonical.canonical();
  detail::require(eff.p12.rows() == canon.p12.rows() && eff.p12.cols() == canon.p12.cols() &&
                      eff.v21_bar.rows() == canon.v21_bar.rows() &&
                      eff.v21_bar.cols() == canon.v21_bar.cols(),
                  "effective parameters do not match the construction");

  GapPolynomial pos{eff.p12.squaredNorm(),
                    (eff.p12.array() * canon.p12.array()).sum(),
                    canon.p12.squaredNorm(),
                    eff.v21_bar.squaredNorm(),
                    (eff.v21_bar.array() * canon.v21_bar.array()).sum(),
                    canon.v21_bar.squaredNorm()};
  GapPolynomial neg = pos;
  neg.pa = -pos.pa;
  neg.vb = -pos.vb;

  const double c_pos = minimise_on_interval(pos, c_lo, c_hi);
  const double c_neg = minimise_on_interval(neg, c_lo, c_hi);
  const double d_pos = manifold_gap(eff, canon, c_pos);
  const double d_neg = manifold_gap(eff, canon, -c_neg);

  ManifoldProjection proj;
  proj.flipped = d_neg < d_pos;
  proj.c_hat = proj.flipped ? -c_neg : c_pos;
  proj.u = eff.p12 - proj.c_hat * canon.p12;
  proj.w = eff.v21_bar - canon.v21_bar / proj.c_hat;
  proj.distance = std::sqrt(proj.u.squaredNorm() + proj.w.squaredNorm());
  proj.normal_residual = (proj.u.array() * canon.p12.array()).sum() -
                         (proj.w.array() * canon.v21_bar.array()).sum() /
                             (proj.c_hat * proj.c_hat);
  return proj;
}

namespace {

template <typename A, typename B>
void compare_bits(const char* name, const A& before, const B& after, InertBlockReport& rep,
                  Eigen::Index row_begin = 0) {
  for (Eigen::Index r = row_begin; r < before.rows(); ++r)
    for (Eigen::Index c = 0; c < before.cols(); ++c)
      if (std::bit_cast<std::uint64_t>(before(r, c)) !=
          std::bit_cast<std::uint64_t>(after(r, c))) {
        std::ostringstream os;
        os << name << "(" << r << "," << c << ")";
        rep.unchanged = false;
        rep.differences.push_back(os.str());
      }
}

}  // namespace

InertBlockReport check_inert_blocks(const AttentionParams& before, const AttentionParams& after) {
  detail::require(before.layout() == after.layout(), "parameter layouts differ");
  InertBlockReport rep;
  compare_bits("P11", before.p11(), after.p11(), rep);
  compare_bits("P21", before.p21(), after.p21(), rep);
  compare_bits("V11", before.v11(), after.v11(), rep);
  compare_bits("V12", before.v12(), after.v12(), rep);
  const Eigen::MatrixXd v21_first_b = before.v21().topRows(1);
  const Eigen::MatrixXd v21_first_a = after.v21().topRows(1);
  compare_bits("V21[row0]", v21_first_b, v21_first_a, rep);
  const Eigen::MatrixXd v22_first_b = before.v22().topRows(1);
  const Eigen::MatrixXd v22_first_a = after.v22().topRows(1);
  compare_bits("V22[row0]", v22_first_b, v22_first_a, rep);
  return rep;
}

StructureMetrics structure_recovery_metrics(const EffectiveParams& learned,
                                            const OptimalConstruction& canonical,
                                            double c_lo, double c_hi) {
  StructureMetrics m;
  m.projection = project_to_manifold(learned, canonical, c_lo, c_hi);
  const EffectiveParams canon = canonical.canonical();
  const double sign = m.projection.c_hat < 0.0 ? -1.0 : 1.0;
  auto cosine = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return (a.array() * b.array()).sum() / (na * nb);
  };
  m.cos_p12 = cosine(learned.p12, sign * canon.p12);
  m.cos_v21 = cosine(learned.v21_bar, sign * canon.v21_bar);

  const double off = (canon.p12.array() == 0.0).select(learned.p12.array(), 0.0).matrix()
                         .squaredNorm() +
                     (canon.v21_bar.array() == 0.0).select(learned.v21_bar.array(), 0.0)
                         .matrix()
                         .squaredNorm();
  const double total = learned.squared_norm();
  m.off_pattern_mass = total > 0.0 ? std::sqrt(off / total) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd MimicSample::w_tilde() const { return prompt.w_tilde(); }

SamplerConfig SamplerConfig::from(const TrainConfig& cfg) {
  SamplerConfig s;
  s.mdp = cfg.mdp;
  s.d = cfg.d;
  s.window = cfg.window;
  s.epsilon = cfg.epsilon;
  s.alpha = cfg.teacher.alpha;
  return s;
}

MimicSample sample_sarsa_mimic(const SamplerConfig& cfg, Rng& rng) {
  const TabularMdp mdp = sample_mdp(rng, cfg.mdp);
  const FeatureMap phi = sample_features(rng, FeatureKind::state_action,
                                         {cfg.mdp.n_states, cfg.mdp.n_actions, cfg.d});
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::VectorXd w(cfg.d);
  for (int i = 0; i < cfg.d; ++i) w(i) = unif(rng);
  const int s0 = std::uniform_int_distribution<int>(0, cfg.mdp.n_states - 1)(rng);
  const Trajectory traj =
      rollout(mdp, PolicySpec::epsilon_greedy(q_table(phi, w), cfg.epsilon), s0, cfg.window, rng);

  MimicSample z;
  z.prompt = build_sarsa_prompt(traj, phi, w, mdp.discount());
  z.stats = trajectory_stats(z.prompt, w);
  z.w = w;
  z.target = sarsa_teacher(traj, phi, w, {cfg.alpha, 1.0, mdp.discount()});
  return z;
}

MimicBatch MimicBatch::draw(const MimicSampler& sampler, int size, Rng& rng) {
  std::vector<MimicSample> samples;
  samples.reserve(size);
  for (int i = 0; i < size; ++i) samples.push_back(sampler(rng));
  return MimicBatch(std::move(samples));
}

double MimicBatch::loss(const EffectiveParams& eff) const {
  double total = 0.0;
  for (const auto& z : samples_)
    total += icrl::loss(decompose_output(eff, z.stats, z.w), z.target);
  return samples_.empty() ? 0.0 : total / static_cast<double>(samples_.size());
}

GradPair MimicBatch::gradient(const EffectiveParams& eff) const {
  GradPair acc;
  acc.d_p12 = Eigen::MatrixXd::Zero(eff.p12.rows(), eff.p12.cols());
  acc.d_v21_bar = Eigen::MatrixXd::Zero(eff.v21_bar.rows(), eff.v21_bar.cols());
  for (const auto& z : samples_) {
    const GradPair g = grad_loss(eff, z.stats, z.w, z.target);
    acc.d_p12 += g.d_p12;
    acc.d_v21_bar += g.d_v21_bar;
  }
  if (!samples_.empty()) {
    acc.d_p12 /= static_cast<double>(samples_.size());
    acc.d_v21_bar /= static_cast<double>(samples_.size());
  }
  return acc;
}

// ---------------------------------------------------------------------------

PLConstants derive_pl_constants(const PlInputs& in) {
  PLConstants k;
  k.inputs = in;
  k.b_sigma = 2.0 * in.b_phi * in.b_phi + in.b_r * in.b_r;
  k.c_q = 0.5 * k.b_sigma * in.b_w_tilde;
  const double a2 = in.alpha * in.alpha;
  k.m0 = (1.0 - in.rho) * std::min(a2 * in.kappa_r * in.kappa_w_tilde / (in.c_plus * in.c_plus),
                                   in.c_minus * in.c_minus * in.kappa_q);
  k.big_m0 = k.b_sigma * k.b_sigma * in.b_w_tilde * in.b_w_tilde *
             (a2 / (in.c_minus * in.c_minus) + 2.0 * in.c_plus * in.c_plus);
  const double sqrt_m0 = std::sqrt(std::max(k.m0, 0.0));
  k.r_max = k.c_q > 0.0 ? sqrt_m0 / (3.0 * k.c_q) : std::numeric_limits<double>::infinity();
  const double num = k.m0 - 3.0 * k.c_q * sqrt_m0 * in.r;
  const double den = std::sqrt(k.big_m0) + k.c_q * in.r;
  k.mu_r = den > 0.0 ? (num * num) / (den * den) : 0.0;
  const double a = in.c_plus * std::sqrt(2.0 * in.d + 1.0) + in.r;
  const double b = std::sqrt(static_cast<double>(in.d)) / in.c_minus + in.r;
  k.k_r = std::sqrt(2.0) * k.b_sigma * in.b_w_tilde * std::sqrt(a * a + b * b);
  k.lambda_r = 0.5 * (sqrt_m0 - k.c_q * in.r) * (sqrt_m0 - k.c_q * in.r);

  if (!(in.kappa_w_tilde > 0.0)) k.violations.push_back("parameter excitation: kappa_w_tilde <= 0");
  if (!(in.kappa_r > 0.0)) k.violations.push_back("Bellman-regressor excitation: kappa_R <= 0");
  if (!(in.kappa_q > 0.0)) k.violations.push_back("TD-target excitation: kappa_q <= 0");
  if (!(in.rho < 1.0)) k.violations.push_back("destructive cancellation: rho >= 1");
  k.in_regime = k.violations.empty() && k.m0 > 0.0 && in.r < k.r_max;
  if (k.violations.empty() && !(in.r < k.r_max))
    k.violations.push_back("tube radius r outside sqrt(m0)/(3 C_Q)");
  return k;
}

namespace {

double min_eigenvalue(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Projects (U, W) onto the normal space at c: removes the tangent (P*, -V*/c^2).
void project_normal(const EffectiveParams& canon, double c, EffectiveParams& dir) {
  const double inv_c2 = 1.0 / (c * c);
  const double along = (dir.p12.array() * canon.p12.array()).sum() -
                       inv_c2 * (dir.v21_bar.array() * canon.v21_bar.array()).sum();
  const double tangent_sq = canon.p12.squaredNorm() + inv_c2 * inv_c2 * canon.v21_bar.squaredNorm();
  const double coef = along / tangent_sq;
  dir.p12 -= coef * canon.p12;
  dir.v21_bar += coef * inv_c2 * canon.v21_bar;
}

EffectiveParams gaussian_like(const EffectiveParams& shape, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  EffectiveParams e{Eigen::MatrixXd(shape.p12.rows(), shape.p12.cols()),
                    Eigen::MatrixXd(shape.v21_bar.rows(), shape.v21_bar.cols())};
  for (Eigen::Index i = 0; i < e.p12.size(); ++i) e.p12.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < e.v21_bar.size(); ++i) e.v21_bar.data()[i] = normal(rng);
  return e;
}

}  // namespace

PLConstants estimate_pl_constants(const MimicSampler& sampler, const PlEstimateOptions& opt,
                                  Rng& rng) {
  detail::require(opt.n_samples >= 1, "need at least one sample");
  const MimicBatch batch = MimicBatch::draw(sampler, opt.n_samples, rng);
  const auto& zs = batch.samples();
  const int d = zs.front().prompt.layout.d;
  const int top = 2 * d + 1;

  PlInputs in;
  in.alpha = opt.alpha;
  in.c_minus = opt.c_lo;
  in.c_plus = opt.c_hi;
  in.r = opt.r;
  in.d = d;
  Eigen::MatrixXd ww = Eigen::MatrixXd::Zero(d + 1, d + 1);
  Eigen::MatrixXd rr = Eigen::MatrixXd::Zero(top, top);
  Eigen::MatrixXd bb = Eigen::MatrixXd::Zero(top, top);
  for (const auto& z : zs) {
    const Eigen::VectorXd wt = z.w_tilde();
    const auto x = z.prompt.context();
    for (int i = 0; i < z.prompt.n; ++i) {
      in.b_phi = std::max(in.b_phi, x.col(i).head(d).norm());
      if (z.prompt.gamma > 0.0)
        in.b_phi = std::max(in.b_phi, x.col(i).segment(d, d).norm() / z.prompt.gamma);
      in.b_r = std::max(in.b_r, std::abs(x(2 * d, i)));
    }
    in.b_w_tilde = std::max(in.b_w_tilde, wt.norm());
    ww += wt * wt.transpose();
    rr += z.stats.regressor.transpose() * z.stats.regressor;
    bb += z.stats.td_target * z.stats.td_target.transpose();
  }
  const double count = static_cast<double>(zs.size());
  in.kappa_w_tilde = std::max(0.0, min_eigenvalue(ww / count));
  in.kappa_r = std::max(0.0, min_eigenvalue(rr / count));
  in.kappa_q = std::max(0.0, min_eigenvalue(bb / count));
  // eigen-solver noise on exactly singular moments
  auto floor_tiny = [](double k, const Eigen::MatrixXd& mat, double count) {
    return k <= 1e-12 * std::max(1.0, mat.trace() / count) ? 0.0 : k;
  };
  in.kappa_w_tilde = floor_tiny(in.kappa_w_tilde, ww, count);
  in.kappa_r = floor_tiny(in.kappa_r, rr, count);
  in.kappa_q = floor_tiny(in.kappa_q, bb, count);

  // rho lower bound over random normal-space directions
  const OptimalConstruction oc = construct_sarsa_optimal(d, opt.alpha);
  const EffectiveParams canon = oc.canonical();
  std::uniform_real_distribution<double> log_c(std::log(opt.c_lo), std::log(opt.c_hi));
  double rho = 0.0;
  for (int k = 0; k < opt.rho_directions; ++k) {
    const double c = std::exp(log_c(rng));
    EffectiveParams dir = gaussian_like(canon, rng);
    project_normal(canon, c, dir);
    double cross = 0.0, ea = 0.0, eb = 0.0;
    for (const auto& z : zs) {
      const Eigen::VectorXd a = z.stats.regressor * (dir.p12 * z.w_tilde());
      const Eigen::VectorXd b = dir.v21_bar * z.stats.td_target;
      cross += a.dot(b);
      ea += a.squaredNorm();
      eb += b.squaredNorm();
    }
    if (ea > 0.0 && eb > 0.0) rho = std::max(rho, std::abs(cross) / std::sqrt(ea * eb));
  }
  in.rho = rho;
  return derive_pl_constants(in);
}

PlTrajectoryReport pl_trajectory_check(const std::vector<PlLogEntry>& log,
                                       std::optional<double> mu_r) {
  PlTrajectoryReport rep;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double running = std::numeric_limits<double>::infinity();
  for (const auto& e : log) {
    if (e.loss < 1e-14) {
      ++rep.skipped;
      rep.ratio.push_back(nan);
      rep.running_min.push_back(std::isfinite(running) ? running : nan);
      continue;
    }
    const double ratio = 0.5 * e.grad_norm * e.grad_norm / e.loss;
    running = std::min(running, ratio);
    rep.ratio.push_back(ratio);
    rep.running_min.push_back(running);
    if (mu_r && ratio < *mu_r) ++rep.violations;
  }
  rep.empirical_pl = running;
  std::vector<double> losses;
  losses.reserve(log.size());
  for (const auto& e : log) losses.push_back(e.loss);
  const LinearFit fit = fit_log_linear(losses);
  rep.fitted_rate = -fit.slope;
  rep.fit_r_squared = fit.r_squared;
  return rep;
}

LinearFit fit_log_linear(const std::vector<double>& values) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] > 0.0) {
      xs.push_back(static_cast<double>(i));
      ys.push_back(std::log(values[i]));
    }
  LinearFit fit;
  const double n = static_cast<double>(xs.size());
  if (xs.size() < 2) return fit;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

double teacher_equivalence_residual(const AttentionParams& params, const TrainConfig& cfg,
                                    int n_prompts, Rng& rng) {
  detail::require(params.layout() == cfg.layout(), "parameters do not match the config layout");
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  auto uniform_vector = [&](int size) {
    Eigen::VectorXd v(size);
    for (int i = 0; i < size; ++i) v(i) = unif(rng);
    return v;
  };
  double worst = 0.0;
  for (int k = 0; k < n_prompts; ++k) {
    const TabularMdp mdp = sample_mdp(rng, cfg.mdp);
    const TeacherConfig teacher{cfg.teacher.alpha, cfg.teacher.beta, mdp.discount()};
    const int s0 = std::uniform_int_distribution<int>(0, cfg.mdp.n_states - 1)(rng);
    const FeatureDims dims{cfg.mdp.n_states, cfg.mdp.n_actions, cfg.d};
    if (cfg.mode == PromptMode::sarsa) {
      const FeatureMap phi = sample_features(rng, FeatureKind::state_action, dims);
      const Eigen::VectorXd w = uniform_vector(cfg.d);
      const Trajectory tr = rollout(mdp, PolicySpec::epsilon_greedy(q_table(phi, w), cfg.epsilon),
                                    s0, cfg.window, rng);
      const Eigen::VectorXd out = readout_sarsa(params, build_sarsa_prompt(tr, phi, w, mdp.discount()));
      worst = std::max(worst, (out - sarsa_teacher(tr, phi, w, teacher)).cwiseAbs().maxCoeff());
    } else {
      const FeatureMap phi_v = sample_features(rng, FeatureKind::state_value, dims);
      const FeatureMap phi_pi = sample_features(
          rng, FeatureKind::policy, {cfg.mdp.n_states, cfg.mdp.n_actions, cfg.m});
      const Eigen::VectorXd lambda = uniform_vector(cfg.m);
      const Eigen::VectorXd w = uniform_vector(cfg.d);
      const Trajectory tr = rollout(
          mdp, PolicySpec::softmax(logit_table(phi_pi, lambda), cfg.epsilon), s0, cfg.window, rng);
      const ActorCriticReadout out = readout_ac(
          params, build_ac_prompt(tr, phi_v, phi_pi, w, lambda, mdp.discount()));
      const ActorCriticTarget t = ac_teacher(tr, phi_v, phi_pi, w, lambda, teacher);
      worst = std::max({worst, (out.w - t.w).cwiseAbs().maxCoeff(),
                        (out.lambda - t.lambda).cwiseAbs().maxCoeff()});
    }
  }
  return worst;
}

EffectiveParams normal_perturbation(const EffectiveParams& canonical, double c, double norm,
                                    Rng& rng) {
  EffectiveParams dir = gaussian_like(canonical, rng);
  project_normal(canonical, c, dir);
  const double scale = norm / std::sqrt(dir.squared_norm());
  dir.p12 *= scale;
  dir.v21_bar *= scale;
  return dir;
}

double batch_hessian_max_eig(const MimicBatch& batch, const EffectiveParams& at, Rng& rng,
                             int iterations) {
  EffectiveParams v = gaussian_like(at, rng);
  double eig = 0.0;
  constexpr double kStep = 1e-5;
  for (int it = 0; it < iterations; ++it) {
    const double nv = std::sqrt(v.squared_norm());
    v.p12 /= nv;
    v.v21_bar /= nv;
    const EffectiveParams plus{at.p12 + kStep * v.p12, at.v21_bar + kStep * v.v21_bar};
    const EffectiveParams minus{at.p12 - kStep * v.p12, at.v21_bar - kStep * v.v21_bar};
    const GradPair gp = batch.gradient(plus);
    const GradPair gm = batch.gradient(minus);
    EffectiveParams hv{(gp.d_p12 - gm.d_p12) / (2.0 * kStep),
                       (gp.d_v21_bar - gm.d_v21_bar) / (2.0 * kStep)};
    eig = (hv.p12.array() * v.p12.array()).sum() + (hv.v21_bar.array() * v.v21_bar.array()).sum();
    v = std::move(hv);
  }
  return eig;
}

LocalProbeResult gradient_descent_log(const MimicBatch& batch, EffectiveParams eff,
                                      const OptimalConstruction& canonical, int steps,
                                      double step_size) {
  LocalProbeResult res;
  res.step_size = step_size;
  std::vector<PlLogEntry> log;
  for (int t = 0; t <= steps; ++t) {
    const double l = batch.loss(eff);
    const GradPair g = batch.gradient(eff);
    const double gn = std::sqrt(g.squared_norm());
    res.loss.push_back(l);
    res.grad_norm.push_back(gn);
    res.distance.push_back(project_to_manifold(eff, canonical).distance);
    log.push_back({l, gn});
    if (t == steps) break;
    eff.p12 -= step_size * g.d_p12;
    eff.v21_bar -= step_size * g.d_v21_bar;
  }
  res.pl = pl_trajectory_check(log);
  res.fit = fit_log_linear(res.loss);
  return res;
}

LocalProbeResult run_local_probe(const LocalProbeConfig& cfg) {
  Rng batch_rng = make_stream(cfg.seed, "probe-batch");
  Rng noise_rng = make_stream(cfg.seed, "probe-noise");
  const SamplerConfig sc = cfg.sampler;
  const MimicBatch batch = MimicBatch::draw(
      [&sc](Rng& r) { return sample_sarsa_mimic(sc, r); }, cfg.batch_size, batch_rng);
  const OptimalConstruction oc = construct_sarsa_optimal(sc.d, sc.alpha);
  const EffectiveParams on_manifold = oc.scaled(cfg.c0);

  const double hmax = batch_hessian_max_eig(batch, on_manifold, noise_rng);
  const double step = cfg.step_size > 0.0 ? cfg.step_size : 1.0 / hmax;
  const EffectiveParams delta =
      normal_perturbation(oc.canonical(), cfg.c0, cfg.noise_norm, noise_rng);
  EffectiveParams start{on_manifold.p12 + delta.p12, on_manifold.v21_bar + delta.v21_bar};

  LocalProbeResult res = gradient_descent_log(batch, std::move(start), oc, cfg.steps, step);
  res.hessian_max_eig = hmax;
  return res;
}

}  // namespace icrl

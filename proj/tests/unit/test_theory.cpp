#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "icrl/errors.hpp"
#include "icrl/teachers.hpp"
#include "icrl/theory.hpp"
#include "oracles.hpp"

using namespace icrl;

namespace {

double frob_dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a.array() * b.array()).sum();
}

// Two-level dense grid over both sign branches of c; returns (c, distance).
std::pair<double, double> grid_projection(const EffectiveParams& e, const EffectiveParams& canon,
                                          double lo, double hi) {
  auto gap = [&](double c) {
    return (e.p12 - c * canon.p12).squaredNorm() + (e.v21_bar - canon.v21_bar / c).squaredNorm();
  };
  const int N = 10000;
  double best_c = lo, best = INFINITY;
  for (double sign : {1.0, -1.0})
    for (int i = 0; i < N; ++i) {
      const double c = sign * (lo + (hi - lo) * i / (N - 1));
      if (gap(c) < best) best = gap(c), best_c = c;
    }
  const double h = (hi - lo) / (N - 1);
  const double a = best_c - h, b = best_c + h;
  for (int i = 0; i < N; ++i) {
    const double c = a + (b - a) * i / (N - 1);
    if (std::abs(c) < lo || std::abs(c) > hi) continue;
    if (gap(c) < best) best = gap(c), best_c = c;
  }
  return {best_c, std::sqrt(best)};
}

MimicSampler desk_sampler(int d = 3) {
  SamplerConfig sc;
  sc.mdp = {4, 3, 0.5, -1, 1};
  sc.d = d;
  sc.window = 6;
  return [sc](Rng& r) { return sample_sarsa_mimic(sc, r); };
}

}  // namespace

TEST(Construction, SarsaPattern) {
  const auto oc = construct_sarsa_optimal(1, 0.2);
  Eigen::MatrixXd p(3, 2);
  p << 0, -1, 0, 1, 1, 0;
  EXPECT_TRUE(oc.p12_star == p);
  EXPECT_TRUE(oc.v21_bar_star == Eigen::RowVector3d(0.2, 0, 0));
  EXPECT_THROW(construct_sarsa_optimal(2, 0.2, 0.0), ContractError);

  const auto oc3 = construct_sarsa_optimal(1, 0.2, 3.0);
  EXPECT_TRUE(oc3.params.p12() == 3.0 * p);
  EXPECT_TRUE(oc3.params.p11().isZero(0.0));
  EXPECT_TRUE(oc3.params.v22().isZero(0.0));
}

TEST(Construction, AcPattern) {
  const auto oc = construct_ac_optimal(1, 1, 0.2, 0.8);
  Eigen::MatrixXd v(2, 4);
  v << 0, 0, 0, 0.2, 0.8, 0, 0, 0;
  EXPECT_TRUE(oc.v21_bar_star == v);
  EXPECT_EQ(oc.p12_star.rows(), 4);
  EXPECT_EQ(oc.p12_star.cols(), 3);
  EXPECT_THROW(construct_ac_optimal(1, 1, 0.2, 0.8, 0.0), ContractError);
}

TEST(Construction, TeacherEquivalenceAndScaling) {
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = fixture::sarsa_case(trial, 3, 6);
    const Eigen::VectorXd ref = oracle::sarsa_update(z.traj, z.phi, z.w, 0.2, z.gamma);
    const Eigen::VectorXd r1 = readout_sarsa(construct_sarsa_optimal(3, 0.2).params, z.prompt);
    const Eigen::VectorXd r3 = readout_sarsa(construct_sarsa_optimal(3, 0.2, 3.0).params, z.prompt);
    EXPECT_LT((r1 - ref).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((r3 - r1).cwiseAbs().maxCoeff(), 1e-12);

    const auto a = fixture::ac_case(trial, 2, 3, 6);
    const auto aref = oracle::ac_update(a.traj, a.phi_v, a.phi_pi, a.w, a.lambda, 0.2, 0.8, a.gamma);
    const auto o1 = readout_ac(construct_ac_optimal(2, 3, 0.2, 0.8).params, a.prompt);
    const auto o2 = readout_ac(construct_ac_optimal(2, 3, 0.2, 0.8, -2.0).params, a.prompt);
    EXPECT_LT((o1.w - aref.w).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((o1.lambda - aref.lambda).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((o2.w - o1.w).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((o2.lambda - o1.lambda).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Projection, OnManifoldPoint) {
  const auto oc = construct_sarsa_optimal(3, 0.2);
  const ManifoldProjection p = project_to_manifold(oc.scaled(2.0), oc);
  EXPECT_NEAR(p.c_hat, 2.0, 1e-8);
  EXPECT_LT(p.distance, 1e-8);
  EXPECT_FALSE(p.flipped);
}

TEST(Projection, FlippedBranch) {
  const auto oc = construct_sarsa_optimal(3, 0.2);
  const ManifoldProjection p = project_to_manifold(oc.scaled(-1.5), oc);
  EXPECT_TRUE(p.flipped);
  EXPECT_NEAR(std::abs(p.c_hat), 1.5, 1e-8);
  EXPECT_LT(p.distance, 1e-8);
}

TEST(Projection, OrthogonalPerturbation) {
  const auto oc = construct_sarsa_optimal(3, 0.2);
  std::mt19937_64 rng(1);
  Eigen::MatrixXd e = oracle::random_matrix(7, 4, rng);
  e -= frob_dot(e, oc.p12_star) / oc.p12_star.squaredNorm() * oc.p12_star;
  e *= 0.1 / e.norm();
  const EffectiveParams x{oc.p12_star + e, oc.v21_bar_star};
  const ManifoldProjection p = project_to_manifold(x, oc);
  EXPECT_LE(p.distance, 0.1 + 1e-12);
  EXPECT_NEAR(p.c_hat, 1.0, 1e-3);
  const auto [gc, gd] = grid_projection(x, oc.canonical(), 0.05, 20.0);
  EXPECT_LE(p.distance, gd + 1e-9);
  EXPECT_NEAR(p.distance, gd, 1e-6);
  EXPECT_NEAR(p.c_hat, gc, 1e-3);
}

TEST(Projection, RandomPointsMatchGridSearch) {
  const auto oc = construct_sarsa_optimal(2, 0.2);
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937_64 rng(100 + trial);
    const EffectiveParams x{oracle::random_matrix(5, 3, rng), oracle::random_matrix(2, 5, rng)};
    const ManifoldProjection p = project_to_manifold(x, oc);
    const auto [gc, gd] = grid_projection(x, oc.canonical(), 0.05, 20.0);
    EXPECT_LE(p.distance, gd + 1e-9) << trial;
    EXPECT_NEAR(p.distance, gd, 1e-6) << trial;
    // distance^2 = |U|^2 + |W|^2 with U, W the residual blocks at c_hat
    EXPECT_NEAR(p.distance * p.distance, p.u.squaredNorm() + p.w.squaredNorm(), 1e-12);
    EXPECT_LT((p.u - (x.p12 - p.c_hat * oc.p12_star)).cwiseAbs().maxCoeff(), 1e-14);
    const bool interior = std::abs(p.c_hat) > 0.0501 && std::abs(p.c_hat) < 19.99;
    if (interior) EXPECT_LT(std::abs(p.normal_residual), 1e-8) << trial;
  }
}

TEST(Projection, BadInterval) {
  const auto oc = construct_sarsa_optimal(2, 0.2);
  EXPECT_THROW(project_to_manifold(oc.canonical(), oc, 2.0, 1.0), ContractError);
  EXPECT_THROW(project_to_manifold(oc.canonical(), oc, 0.0, 1.0), ContractError);
  EXPECT_THROW(project_to_manifold(oc.canonical(), oc, -1.0, 1.0), ContractError);
}

TEST(InertBlocks, DetectsOnlyInertChanges) {
  Rng rng = make_stream(2, "init");
  const AttentionParams before = init_params(BlockLayout::sarsa(3), 0.1, rng);
  AttentionParams after = before;
  after.p12()(1, 1) += 0.5;
  after.v21_bar()(0, 0) -= 0.5;
  after.p22()(0, 0) = 1.0;
  EXPECT_TRUE(check_inert_blocks(before, after).unchanged);

  after.p11()(2, 4) = 1e-300;
  const InertBlockReport r = check_inert_blocks(before, after);
  EXPECT_FALSE(r.unchanged);
  ASSERT_EQ(r.differences.size(), 1u);
  EXPECT_EQ(r.differences[0], "P11(2,4)");

  AttentionParams row0 = before;
  row0.v()(7, 9) = 2.0;  // first row of V22
  EXPECT_FALSE(check_inert_blocks(before, row0).unchanged);

  EXPECT_THROW(check_inert_blocks(before, AttentionParams(BlockLayout::sarsa(2))), ContractError);
}

TEST(Structure, ScaledOptimum) {
  const auto oc = construct_sarsa_optimal(4, 0.2);
  const StructureMetrics s = structure_recovery_metrics(oc.scaled(1.7), oc);
  EXPECT_NEAR(s.cos_p12, 1.0, 1e-12);
  EXPECT_NEAR(s.cos_v21, 1.0, 1e-12);
  EXPECT_EQ(s.off_pattern_mass, 0.0);
  EXPECT_NEAR(s.projection.c_hat, 1.7, 1e-8);
}

TEST(Structure, SmallNoise) {
  const auto oc = construct_sarsa_optimal(5, 0.2);
  std::mt19937_64 rng(3);
  EffectiveParams x = oc.canonical();
  Eigen::MatrixXd np = oracle::random_matrix(11, 6, rng), nv = oracle::random_matrix(5, 11, rng);
  x.p12 += 0.01 * oc.p12_star.norm() / np.norm() * np;
  x.v21_bar += 0.01 * oc.v21_bar_star.norm() / nv.norm() * nv;
  const StructureMetrics s = structure_recovery_metrics(x, oc);
  EXPECT_GT(s.cos_p12, 0.99);
  EXPECT_GT(s.cos_v21, 0.99);
  EXPECT_LT(s.off_pattern_mass, 0.05);
}

TEST(Structure, RandomInitIsUnaligned) {
  const auto oc = construct_sarsa_optimal(10, 0.2);
  int good = 0;
  const int seeds = 200;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng = make_stream(seed, "init");
    const AttentionParams a = init_params(BlockLayout::sarsa(10), 0.1, rng);
    const StructureMetrics s = structure_recovery_metrics(EffectiveParams::from(a), oc);
    if (std::abs(s.cos_p12) < 0.2 && std::abs(s.cos_v21) < 0.2) ++good;
  }
  EXPECT_GE(good, 0.95 * seeds);
}

TEST(PlConstants, ClosedForms) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  for (int k = 0; k < 10; ++k) {
    PlInputs in;
    in.b_phi = u(rng);
    in.b_r = u(rng);
    in.b_w_tilde = u(rng);
    in.kappa_w_tilde = u(rng);
    in.kappa_r = u(rng);
    in.kappa_q = u(rng);
    in.rho = 0.4 * u(rng);
    in.alpha = 0.2;
    in.c_minus = 0.5;
    in.c_plus = 2.0;
    in.d = 3;
    const PLConstants base = derive_pl_constants(in);
    in.r = 0.5 * base.r_max;
    const PLConstants c = derive_pl_constants(in);

    const double bs = 2 * in.b_phi * in.b_phi + in.b_r * in.b_r;
    const double cq = 0.5 * bs * in.b_w_tilde;
    const double m0 = (1 - in.rho) * std::min(0.04 * in.kappa_r * in.kappa_w_tilde / 4.0,
                                              0.25 * in.kappa_q);
    const double M0 = bs * bs * in.b_w_tilde * in.b_w_tilde * (0.04 / 0.25 + 2.0 * 4.0);
    const double mu = std::pow(m0 - 3 * cq * std::sqrt(m0) * in.r, 2) /
                      std::pow(std::sqrt(M0) + cq * in.r, 2);
    EXPECT_NEAR(c.b_sigma, bs, 1e-12);
    EXPECT_NEAR(c.c_q, cq, 1e-12);
    EXPECT_NEAR(c.m0, m0, 1e-14);
    EXPECT_NEAR(c.big_m0, M0, 1e-9 * M0);
    EXPECT_NEAR(c.mu_r, mu, 1e-12 * std::max(1.0, mu));
    EXPECT_NEAR(c.lambda_r, 0.5 * std::pow(std::sqrt(m0) - cq * in.r, 2), 1e-14);
    const double kr = std::sqrt(2.0) * bs * in.b_w_tilde *
                      std::sqrt(std::pow(2.0 * std::sqrt(7.0) + in.r, 2) +
                                std::pow(std::sqrt(3.0) / 0.5 + in.r, 2));
    EXPECT_NEAR(c.k_r, kr, 1e-10 * kr);
    EXPECT_TRUE(c.in_regime);
    EXPECT_LE(c.m0, c.big_m0);
    // r = 0 specialisation
    EXPECT_NEAR(base.mu_r, base.m0 * base.m0 / base.big_m0, 1e-15);
  }
}

TEST(PlConstants, BSigmaOnClippedRanges) {
  PlInputs in;
  in.d = 15;
  in.b_phi = std::sqrt(15.0);
  in.b_r = 1.0;
  EXPECT_DOUBLE_EQ(derive_pl_constants(in).b_sigma, 31.0);
}

TEST(PlConstants, ViolationsAreReported) {
  PlInputs in;
  in.b_phi = in.b_r = in.b_w_tilde = 1.0;
  in.kappa_w_tilde = 1.0;
  in.kappa_r = 0.0;
  in.kappa_q = 1.0;
  in.rho = 1.2;
  const PLConstants c = derive_pl_constants(in);
  EXPECT_FALSE(c.in_regime);
  EXPECT_EQ(c.violations.size(), 2u);
}

TEST(PlConstants, ZeroFeaturesGiveZeroKappaR) {
  const MimicSampler zero = [](Rng& r) {
    const TabularMdp mdp = sample_mdp(r, {3, 2, 0.5, -1, 1});
    FeatureMap phi;
    phi.n_states = 3;
    phi.n_actions = 2;
    phi.table = Eigen::MatrixXd::Zero(6, 3);
    MimicSample s;
    s.w = fixture::uniform_vec(3, r);
    const Trajectory t = rollout(mdp, PolicySpec::uniform(), 0, 5, r);
    s.prompt = build_sarsa_prompt(t, phi, s.w, 0.5);
    s.stats = trajectory_stats(s.prompt, s.w);
    s.target = sarsa_teacher(t, phi, s.w, {0.2, 0.8, 0.5});
    return s;
  };
  PlEstimateOptions opt;
  opt.n_samples = 200;
  opt.rho_directions = 10;
  Rng rng = make_stream(5, "pl");
  const PLConstants c = estimate_pl_constants(zero, opt, rng);
  EXPECT_EQ(c.inputs.kappa_r, 0.0);
  EXPECT_EQ(c.inputs.b_phi, 0.0);
  bool flagged = false;
  for (const auto& v : c.violations) flagged |= v.find("kappa_R") != std::string::npos;
  EXPECT_TRUE(flagged);
}

TEST(PlConstants, EstimatesOnDeskSampler) {
  PlEstimateOptions opt;
  opt.n_samples = 300;
  opt.rho_directions = 50;
  Rng rng = make_stream(6, "pl");
  const PLConstants c = estimate_pl_constants(desk_sampler(3), opt, rng);
  EXPECT_GT(c.inputs.kappa_w_tilde, 0.0);
  EXPECT_GT(c.inputs.kappa_r, 0.0);
  EXPECT_GT(c.inputs.kappa_q, 0.0);
  EXPECT_GE(c.inputs.rho, 0.0);
  EXPECT_LT(c.inputs.rho, 1.0);
  EXPECT_LE(c.inputs.b_phi, std::sqrt(3.0));
  EXPECT_LE(c.inputs.b_w_tilde, std::sqrt(4.0));
  EXPECT_LE(c.m0, c.big_m0);
  EXPECT_TRUE(std::isfinite(c.mu_r));
  EXPECT_GE(c.mu_r, 0.0);
}

TEST(PlTrajectory, SkipsOptimumAndFindsRate) {
  std::vector<PlLogEntry> flat(5, {0.0, 0.0});
  const PlTrajectoryReport f = pl_trajectory_check(flat);
  EXPECT_EQ(f.skipped, 5);
  EXPECT_TRUE(std::isnan(f.ratio[0]));

  const double mu = 0.03;
  std::vector<PlLogEntry> log;
  for (int t = 0; t < 200; ++t) {
    const double l = std::exp(-2.0 * mu * t);
    log.push_back({l, std::sqrt(2.0 * mu * l)});
  }
  const PlTrajectoryReport r = pl_trajectory_check(log, mu * 1.01);
  for (double x : r.ratio) EXPECT_NEAR(x, mu, 1e-12);
  EXPECT_NEAR(r.empirical_pl, mu, 1e-12);
  EXPECT_EQ(r.violations, 200);
  EXPECT_NEAR(r.fitted_rate, 2.0 * mu, 1e-12);
  EXPECT_NEAR(r.fit_r_squared, 1.0, 1e-12);
  EXPECT_EQ(pl_trajectory_check(log, mu * 0.99).violations, 0);
}

TEST(Fit, LogLinear) {
  std::vector<double> v;
  for (int i = 0; i < 50; ++i) v.push_back(3.0 * std::exp(-0.1 * i));
  const LinearFit f = fit_log_linear(v);
  EXPECT_NEAR(f.slope, -0.1, 1e-12);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-12);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
}

TEST(Probe, NormalPerturbationIsNormal) {
  const auto oc = construct_sarsa_optimal(3, 0.2);
  Rng rng = make_stream(7, "probe");
  for (double c : {1.0, 0.5, 3.0}) {
    const EffectiveParams u = normal_perturbation(oc.canonical(), c, 0.05, rng);
    EXPECT_NEAR(std::sqrt(u.squared_norm()), 0.05, 1e-14);
    const double tangent =
        frob_dot(u.p12, oc.p12_star) - frob_dot(u.v21_bar, oc.v21_bar_star) / (c * c);
    EXPECT_LT(std::abs(tangent), 1e-14);
    // the nearest manifold point of theta*(c) + u is theta*(c) itself
    EffectiveParams x = oc.scaled(c);
    x.p12 += u.p12;
    x.v21_bar += u.v21_bar;
    EXPECT_NEAR(project_to_manifold(x, oc).distance, 0.05, 1e-3);
  }
}

TEST(Probe, HessianEigenvalueMatchesDenseHessian) {
  Rng rng = make_stream(8, "batch");
  const MimicBatch batch = MimicBatch::draw(desk_sampler(2), 32, rng);
  const auto oc = construct_sarsa_optimal(2, 0.2);
  const EffectiveParams at = oc.canonical();
  const int np = static_cast<int>(at.p12.size()), nv = static_cast<int>(at.v21_bar.size());
  auto flat_grad = [&](const EffectiveParams& e) {
    const GradPair g = batch.gradient(e);
    Eigen::VectorXd v(np + nv);
    v << g.d_p12.reshaped(), g.d_v21_bar.reshaped();
    return v;
  };
  Eigen::MatrixXd H(np + nv, np + nv);
  const double h = 1e-5;
  for (int k = 0; k < np + nv; ++k) {
    EffectiveParams up = at, dn = at;
    double& xu = k < np ? up.p12.data()[k] : up.v21_bar.data()[k - np];
    double& xd = k < np ? dn.p12.data()[k] : dn.v21_bar.data()[k - np];
    xu += h;
    xd -= h;
    H.col(k) = (flat_grad(up) - flat_grad(dn)) / (2 * h);
  }
  const Eigen::MatrixXd sym = 0.5 * (H + H.transpose());
  const double ref = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues().maxCoeff();
  Rng prng = make_stream(8, "power");
  EXPECT_NEAR(batch_hessian_max_eig(batch, at, prng, 200), ref, 1e-4 * ref);
}

TEST(Probe, ShortRunContracts) {
  LocalProbeConfig cfg;
  cfg.sampler.mdp = {4, 3, 0.5, -1, 1};
  cfg.sampler.d = 3;
  cfg.sampler.window = 8;
  cfg.batch_size = 64;
  cfg.steps = 1500;
  cfg.seed = 9;
  const LocalProbeResult r = run_local_probe(cfg);
  ASSERT_EQ(r.loss.size(), 1501u);
  EXPECT_GT(r.step_size, 0.0);
  EXPECT_LT(r.loss.back(), 1e-3 * r.loss.front());
  EXPECT_LT(r.distance.back(), r.distance.front());
  EXPECT_GT(r.pl.empirical_pl, 0.0);
  for (std::size_t i = 1; i < r.loss.size(); ++i) ASSERT_LE(r.loss[i], r.loss[i - 1] * (1 + 1e-12));
}

TEST(TeacherResidual, OptimumVersusRandom) {
  for (PromptMode mode : {PromptMode::sarsa, PromptMode::actor_critic}) {
    TrainConfig cfg = TrainConfig::desk_scale(mode);
    const auto oc = mode == PromptMode::sarsa
                        ? construct_sarsa_optimal(cfg.d, cfg.teacher.alpha)
                        : construct_ac_optimal(cfg.d, cfg.m, cfg.teacher.alpha, cfg.teacher.beta);
    Rng rng = make_stream(10, "residual");
    EXPECT_LT(teacher_equivalence_residual(oc.params, cfg, 50, rng), 1e-10);
    Rng init = make_stream(10, "init");
    const AttentionParams random = init_params(cfg.layout(), 0.1, init);
    EXPECT_GT(teacher_equivalence_residual(random, cfg, 50, rng), 1e-3);
  }
}

#include <gtest/gtest.h>

#include <cmath>

#include "icrl/errors.hpp"
#include "icrl/prompt.hpp"
#include "icrl/rng.hpp"

using namespace icrl;

namespace {

struct Sarsa {
  TabularMdp mdp;
  FeatureMap phi;
  Trajectory traj;
};

Sarsa random_sarsa(std::uint64_t seed, int S, int A, int d, int n) {
  Rng rng = make_stream(seed, "mdp");
  Sarsa out{sample_mdp(rng, {S, A, 0.5, -1, 1}), {}, {}};
  out.phi = sample_features(rng, FeatureKind::state_action, {S, A, d});
  out.traj = rollout(out.mdp, PolicySpec::uniform(), 0, n, rng);
  return out;
}

Eigen::VectorXd uniform_vec(int size, Rng& rng) {
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v(i) = 2.0 * uniform01(rng) - 1.0;
  return v;
}

}  // namespace

TEST(SarsaPrompt, PaperShapeAndUnitColumn) {
  const Sarsa z = random_sarsa(1, 9, 4, 36, 20);
  const Prompt p = build_sarsa_prompt(z.traj, z.phi, Eigen::VectorXd::Zero(36), 0.5);
  EXPECT_EQ(p.matrix.rows(), 110);
  EXPECT_EQ(p.matrix.cols(), 21);
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(110);
  unit(2 * 36 + 1) = 1.0;
  EXPECT_TRUE(p.matrix.col(20) == unit);
}

TEST(SarsaPrompt, ColumnsCarryTheTransitions) {
  const int d = 4;
  const Sarsa z = random_sarsa(2, 3, 2, d, 7);
  Rng rng = make_stream(2, "w");
  const Eigen::VectorXd w = uniform_vec(d, rng);
  const double gamma = 0.5;
  const Prompt p = build_sarsa_prompt(z.traj, z.phi, w, gamma);
  for (int i = 0; i < 7; ++i) {
    const Eigen::VectorXd phi = z.phi.at(z.traj.states[i], z.traj.actions[i]);
    const Eigen::VectorXd nxt = z.phi.at(z.traj.states[i + 1], z.traj.actions[i + 1]);
    const double r = z.traj.rewards[i];
    const double expect = phi.squaredNorm() + gamma * gamma * nxt.squaredNorm() + r * r;
    EXPECT_NEAR(p.matrix.col(i).squaredNorm(), expect, 1e-12);
    EXPECT_TRUE(p.matrix.col(i).head(d) == phi);
    EXPECT_EQ(p.matrix(2 * d, i), r);
    EXPECT_TRUE(p.matrix.col(i).tail(d + 1).isZero(0.0));
  }
  EXPECT_TRUE(p.matrix.col(7).tail(d) == w);
  EXPECT_TRUE(p.w_tilde().tail(d) == w);
  EXPECT_EQ(p.w_tilde()(0), 1.0);
}

TEST(SarsaPrompt, DimensionMismatch) {
  const Sarsa z = random_sarsa(3, 3, 2, 4, 5);
  EXPECT_THROW(build_sarsa_prompt(z.traj, z.phi, Eigen::VectorXd::Zero(3), 0.5), ContractError);
}

TEST(AcPrompt, PaperShapeAndUnitColumn) {
  Rng rng = make_stream(4, "mdp");
  const TabularMdp mdp = sample_mdp(rng, {9, 4, 0.5, -1, 1});
  const FeatureMap fv = sample_features(rng, FeatureKind::state_value, {9, 4, 9});
  const FeatureMap fp = sample_features(rng, FeatureKind::policy, {9, 4, 36});
  const Trajectory t = rollout(mdp, PolicySpec::uniform(), 0, 20, rng);
  const Prompt p = build_ac_prompt(t, fv, fp, Eigen::VectorXd::Zero(9), Eigen::VectorXd::Zero(36), 0.5);
  EXPECT_EQ(p.matrix.rows(), 101);
  EXPECT_EQ(p.matrix.cols(), 21);
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(101);
  unit(2 * 9 + 36 + 1) = 1.0;
  EXPECT_TRUE(p.matrix.col(20) == unit);
}

TEST(AcPrompt, ScoreColumnsAreDiscounted) {
  const int d = 3, m = 2;
  Rng rng = make_stream(5, "mdp");
  const TabularMdp mdp = sample_mdp(rng, {4, 3, 0.5, -1, 1});
  const FeatureMap fv = sample_features(rng, FeatureKind::state_value, {4, 3, d});
  const FeatureMap fp = sample_features(rng, FeatureKind::policy, {4, 3, m});
  const Trajectory t = rollout(mdp, PolicySpec::uniform(), 1, 6, rng);
  const Eigen::VectorXd w = uniform_vec(d, rng), lambda = uniform_vec(m, rng);
  const double gamma = 0.7;
  const Prompt p = build_ac_prompt(t, fv, fp, w, lambda, gamma);
  const Eigen::VectorXd g0 = score_function(fp, lambda, t.states[0], t.actions[0]);
  EXPECT_TRUE(p.matrix.col(0).segment(2 * d + 1, m) == g0);
  double disc = 1.0;
  for (int i = 0; i < 6; ++i) {
    const Eigen::VectorXd g = score_function(fp, lambda, t.states[i], t.actions[i]);
    EXPECT_LT((p.matrix.col(i).segment(2 * d + 1, m) - disc * g).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_TRUE(p.matrix.col(i).head(d) == fv.at(t.states[i]));
    disc *= gamma;
  }
  EXPECT_TRUE(p.matrix.col(6).segment(2 * d + m + 2, m) == lambda);
  EXPECT_TRUE(p.matrix.col(6).tail(d) == w);
}

TEST(TrajectoryStats, HandExample) {
  FeatureMap f;
  f.kind = FeatureKind::state_action;
  f.n_states = 2;
  f.n_actions = 1;
  f.table.resize(2, 1);
  f.table << 1.0, 2.0;
  Trajectory t{{0, 1}, {0, 0}, {1.0}};
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
  const Prompt p = build_sarsa_prompt(t, f, w, 0.5);
  const TrajectoryStats st = trajectory_stats(p, w);
  ASSERT_EQ(st.td_errors.size(), 1);
  EXPECT_DOUBLE_EQ(st.td_errors(0), 1.0);
  EXPECT_TRUE(st.td_target == Eigen::Vector3d(1, 1, 1));
}

TEST(TrajectoryStats, ZeroRewardsZeroW) {
  Sarsa z = random_sarsa(6, 3, 2, 3, 8);
  for (double& r : z.traj.rewards) r = 0.0;
  const Eigen::VectorXd w = Eigen::VectorXd::Zero(3);
  const TrajectoryStats st = trajectory_stats(build_sarsa_prompt(z.traj, z.phi, w, 0.5), w);
  EXPECT_EQ(st.td_target(6), 0.0);
}

TEST(TrajectoryStats, Identities) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const int d = 2 + static_cast<int>(seed % 4);
    const Sarsa z = random_sarsa(seed, 4, 3, d, 5 + static_cast<int>(seed % 7));
    Rng rng = make_stream(seed, "w");
    const Eigen::VectorXd w = uniform_vec(d, rng);
    const Prompt p = build_sarsa_prompt(z.traj, z.phi, w, 0.5);
    const TrajectoryStats st = trajectory_stats(p, w);
    const int n = z.traj.length();

    // definitions recomputed from the prompt columns
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(2 * d + 1, 2 * d + 1);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(2 * d + 1);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd x = p.matrix.col(i).head(2 * d + 1);
      const double delta = x(2 * d) + x.segment(d, d).dot(w) - x.head(d).dot(w);
      EXPECT_NEAR(st.td_errors(i), delta, 1e-13);
      sigma += x * x.transpose() / n;
      b += x * delta / n;
    }
    EXPECT_LT((st.sigma_hat - sigma).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT((st.td_target - b).cwiseAbs().maxCoeff(), 1e-13);

    EXPECT_TRUE(st.regressor == st.sigma_hat.topRows(d));
    EXPECT_LT((st.sigma_hat - st.sigma_hat.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(st.sigma_hat);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);

    Eigen::VectorXd sel(2 * d + 1);
    sel << -w, w, 1.0;
    EXPECT_LT((st.td_target - st.sigma_hat * sel).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((context_moment(p) - st.sigma_hat).cwiseAbs().maxCoeff(), 1e-14);
  }
}

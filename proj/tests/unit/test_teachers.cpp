#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "icrl/errors.hpp"
#include "icrl/teachers.hpp"
#include "icrl/theory.hpp"
#include "oracles.hpp"

using namespace icrl;

namespace {

double max_abs(const Eigen::VectorXd& v) { return v.cwiseAbs().maxCoeff(); }

FeatureMap table_map(FeatureKind kind, int S, int A, Eigen::MatrixXd table) {
  FeatureMap f;
  f.kind = kind;
  f.n_states = S;
  f.n_actions = A;
  f.table = std::move(table);
  return f;
}

}  // namespace

TEST(SarsaTeacher, HandValue) {
  // three single-action states with phi = 1, 2, 1 along the path
  const FeatureMap f = table_map(FeatureKind::state_action, 3, 1, Eigen::Vector3d(1, 2, 1));
  const Trajectory t{{0, 1, 2}, {0, 0, 0}, {1.0, -1.0}};
  const TeacherConfig cfg{0.1, 0.8, 0.5};
  EXPECT_NEAR(sarsa_teacher(t, f, Eigen::VectorXd::Ones(1), cfg)(0), 0.8, 1e-15);
}

TEST(SarsaTeacher, ZeroRewardsZeroW) {
  auto z = fixture::sarsa_case(1, 3, 6);
  for (double& r : z.traj.rewards) r = 0.0;
  EXPECT_TRUE(sarsa_teacher(z.traj, z.phi, Eigen::VectorXd::Zero(3), {}).isZero(0.0));
}

TEST(SarsaTeacher, MatchesOracleAndBlockAlgebra) {
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + trial % 5;
    const auto z = fixture::sarsa_case(10 + trial, d, 3 + trial % 8);
    const TeacherConfig cfg{0.05 + 0.01 * trial, 0.8, z.gamma};
    const Eigen::VectorXd out = sarsa_teacher(z.traj, z.phi, z.w, cfg);
    EXPECT_LT(max_abs(out - oracle::sarsa_update(z.traj, z.phi, z.w, cfg.alpha, z.gamma)), 1e-14);

    // w + V21* Sigma P12* w~, all blocks written out here
    const TrajectoryStats st = trajectory_stats(z.prompt, z.w);
    Eigen::MatrixXd p12 = Eigen::MatrixXd::Zero(2 * d + 1, d + 1);
    p12.block(0, 1, d, d) = -Eigen::MatrixXd::Identity(d, d);
    p12.block(d, 1, d, d) = Eigen::MatrixXd::Identity(d, d);
    p12(2 * d, 0) = 1.0;
    Eigen::MatrixXd v21 = Eigen::MatrixXd::Zero(d, 2 * d + 1);
    v21.leftCols(d) = cfg.alpha * Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd wt(d + 1);
    wt << 1.0, z.w;
    EXPECT_LT(max_abs(out - (z.w + v21 * st.sigma_hat * p12 * wt)), 1e-12);

    // compact form w + alpha [S_phi_r + gamma S_phi_phi+ w - S_phi_phi w]
    const int n = z.traj.length();
    Eigen::VectorXd s_r = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd s_next = Eigen::MatrixXd::Zero(d, d), s_same = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd phi = z.phi.at(z.traj.states[i], z.traj.actions[i]);
      const Eigen::VectorXd nxt = z.phi.at(z.traj.states[i + 1], z.traj.actions[i + 1]);
      s_r += phi * z.traj.rewards[i] / n;
      s_next += phi * nxt.transpose() / n;
      s_same += phi * phi.transpose() / n;
    }
    const Eigen::VectorXd compact = z.w + cfg.alpha * (s_r + z.gamma * s_next * z.w - s_same * z.w);
    EXPECT_LT(max_abs(out - compact), 1e-12);
  }
}

TEST(SarsaTeacher, AffineInW) {
  const auto z = fixture::sarsa_case(2, 4, 9);
  Rng rng = make_stream(2, "w");
  const TeacherConfig cfg{0.3, 0.8, z.gamma};
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd u0 = sarsa_teacher(z.traj, z.phi, zero, cfg);
  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd w1 = fixture::uniform_vec(4, rng), w2 = fixture::uniform_vec(4, rng);
    const Eigen::VectorXd lhs = sarsa_teacher(z.traj, z.phi, w1 + w2, cfg) - u0;
    const Eigen::VectorXd rhs =
        (sarsa_teacher(z.traj, z.phi, w1, cfg) - u0) + (sarsa_teacher(z.traj, z.phi, w2, cfg) - u0);
    EXPECT_LT(max_abs(lhs - rhs), 1e-10);
  }
}

TEST(SarsaTeacher, Errors) {
  const auto z = fixture::sarsa_case(3, 3, 4);
  EXPECT_THROW(sarsa_teacher(z.traj, z.phi, Eigen::VectorXd::Zero(2), {}), ContractError);
  EXPECT_THROW((TeacherConfig{0.0, 0.8, 0.5}.validate()), ConfigError);
  EXPECT_THROW((TeacherConfig{0.2, -1.0, 0.5}.validate()), ConfigError);
  EXPECT_THROW((TeacherConfig{0.2, 0.8, 1.0}.validate()), ConfigError);
}

TEST(AcTeacher, HandValue) {
  const FeatureMap fv = table_map(FeatureKind::state_value, 1, 2, Eigen::MatrixXd::Ones(1, 1));
  const FeatureMap fp = table_map(FeatureKind::policy, 1, 2, Eigen::Vector2d(1, 0));
  const Trajectory t{{0, 0}, {0, 0}, {1.0}};
  const auto out = ac_teacher(t, fv, fp, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1),
                              {0.2, 0.8, 0.5});
  EXPECT_NEAR(out.w(0), 0.8, 1e-15);
  EXPECT_NEAR(out.lambda(0), 0.1, 1e-15);
}

TEST(AcTeacher, ZeroTdErrorsLeaveParameters) {
  // one state, reward 0, phi_V = 0: every delta is zero
  const FeatureMap fv = table_map(FeatureKind::state_value, 1, 2, Eigen::MatrixXd::Zero(1, 2));
  const FeatureMap fp = table_map(FeatureKind::policy, 1, 2, Eigen::Vector2d(0.3, -0.4));
  const Trajectory t{{0, 0, 0, 0}, {0, 1, 1, 0}, {0.0, 0.0, 0.0}};
  const Eigen::VectorXd w = Eigen::Vector2d(0.5, -1.0), lambda = Eigen::VectorXd::Constant(1, 0.7);
  const auto out = ac_teacher(t, fv, fp, w, lambda, {});
  EXPECT_TRUE(out.w == w);
  EXPECT_TRUE(out.lambda == lambda);
}

TEST(AcTeacher, MatchesOracleAndBlockAlgebra) {
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + trial % 4, m = 1 + trial % 3;
    const auto z = fixture::ac_case(60 + trial, d, m, 2 + trial % 9);
    const TeacherConfig cfg{0.2, 0.8, z.gamma};
    const auto out = ac_teacher(z.traj, z.phi_v, z.phi_pi, z.w, z.lambda, cfg);
    const auto ref = oracle::ac_update(z.traj, z.phi_v, z.phi_pi, z.w, z.lambda, 0.2, 0.8, z.gamma);
    EXPECT_LT(max_abs(out.w - ref.w), 1e-14);
    EXPECT_LT(max_abs(out.lambda - ref.lambda), 1e-14);

    const auto oc = construct_ac_optimal(d, m, 0.2, 0.8);
    const Eigen::VectorXd wt = z.prompt.w_tilde();
    const Eigen::VectorXd block =
        wt.tail(d + m) + oc.v21_bar_star * context_moment(z.prompt) * oc.p12_star * wt;
    EXPECT_LT(max_abs(block.head(m) - out.lambda), 1e-12);
    EXPECT_LT(max_abs(block.tail(d) - out.w), 1e-12);
  }
}

TEST(AcTeacher, CriticAffineActorLinearInDelta) {
  const auto z = fixture::ac_case(4, 3, 2, 7);
  const TeacherConfig cfg{0.2, 0.8, z.gamma};
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  Rng rng = make_stream(4, "w");
  const auto u0 = ac_teacher(z.traj, z.phi_v, z.phi_pi, zero, z.lambda, cfg);
  const Eigen::VectorXd w1 = fixture::uniform_vec(3, rng), w2 = fixture::uniform_vec(3, rng);
  const auto a = ac_teacher(z.traj, z.phi_v, z.phi_pi, w1, z.lambda, cfg);
  const auto b = ac_teacher(z.traj, z.phi_v, z.phi_pi, w2, z.lambda, cfg);
  const auto ab = ac_teacher(z.traj, z.phi_v, z.phi_pi, w1 + w2, z.lambda, cfg);
  EXPECT_LT(max_abs((ab.w - u0.w) - (a.w - u0.w) - (b.w - u0.w)), 1e-10);
  // delta is affine in w, so the actor increment is too
  EXPECT_LT(max_abs((ab.lambda - u0.lambda) - (a.lambda - u0.lambda) - (b.lambda - u0.lambda)), 1e-10);
}

TEST(AcTeacher, Errors) {
  const auto z = fixture::ac_case(5, 2, 2, 4);
  EXPECT_THROW(ac_teacher(z.traj, z.phi_v, z.phi_pi, Eigen::VectorXd::Zero(3), z.lambda, {}),
               ContractError);
  EXPECT_THROW(ac_teacher(z.traj, z.phi_pi, z.phi_v, z.w, z.lambda, {}), ContractError);
}

#pragma once
// Random SARSA / actor-critic problem instances shared by the unit tests.

#include <Eigen/Dense>
#include <cstdint>

#include "icrl/features.hpp"
#include "icrl/mdp.hpp"
#include "icrl/prompt.hpp"
#include "icrl/rng.hpp"

namespace fixture {

inline Eigen::VectorXd uniform_vec(int size, icrl::Rng& rng, double scale = 1.0) {
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v(i) = scale * (2.0 * icrl::uniform01(rng) - 1.0);
  return v;
}

struct SarsaCase {
  icrl::TabularMdp mdp;
  icrl::FeatureMap phi;
  icrl::Trajectory traj;
  Eigen::VectorXd w;
  double gamma = 0.5;
  icrl::Prompt prompt;
};

inline SarsaCase sarsa_case(std::uint64_t seed, int d, int n, int S = 4, int A = 3,
                            double gamma = 0.5) {
  icrl::Rng rng = icrl::make_stream(seed, "fixture");
  SarsaCase c{icrl::sample_mdp(rng, {S, A, gamma, -1, 1}), {}, {}, {}, gamma, {}};
  c.phi = icrl::sample_features(rng, icrl::FeatureKind::state_action, {S, A, d});
  c.w = uniform_vec(d, rng);
  const int start = static_cast<int>(icrl::uniform01(rng) * S);
  c.traj = icrl::rollout(c.mdp, icrl::PolicySpec::uniform(), start, n, rng);
  c.prompt = icrl::build_sarsa_prompt(c.traj, c.phi, c.w, gamma);
  return c;
}

struct AcCase {
  icrl::TabularMdp mdp;
  icrl::FeatureMap phi_v;
  icrl::FeatureMap phi_pi;
  icrl::Trajectory traj;
  Eigen::VectorXd w;
  Eigen::VectorXd lambda;
  double gamma = 0.5;
  icrl::Prompt prompt;
};

inline AcCase ac_case(std::uint64_t seed, int d, int m, int n, int S = 4, int A = 3,
                      double gamma = 0.5) {
  icrl::Rng rng = icrl::make_stream(seed, "fixture-ac");
  AcCase c{icrl::sample_mdp(rng, {S, A, gamma, -1, 1}), {}, {}, {}, {}, {}, gamma, {}};
  c.phi_v = icrl::sample_features(rng, icrl::FeatureKind::state_value, {S, A, d});
  c.phi_pi = icrl::sample_features(rng, icrl::FeatureKind::policy, {S, A, m});
  c.w = uniform_vec(d, rng);
  c.lambda = uniform_vec(m, rng);
  const int start = static_cast<int>(icrl::uniform01(rng) * S);
  c.traj = icrl::rollout(c.mdp, icrl::PolicySpec::uniform(), start, n, rng);
  c.prompt = icrl::build_ac_prompt(c.traj, c.phi_v, c.phi_pi, c.w, c.lambda, gamma);
  return c;
}

}  // namespace fixture

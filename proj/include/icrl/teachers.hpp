#pragma once

#include <Eigen/Dense>

#include "icrl/features.hpp"
#include "icrl/mdp.hpp"

namespace icrl {

struct TeacherConfig {
  double alpha = 0.2;  // SARSA step size / actor step size
  double beta = 0.8;   // critic step size (actor-critic only)
  double gamma = 0.5;

  void validate() const;
};

/// Batch semi-gradient SARSA:
///   w + (alpha/n) sum_i [r_{i+1} + gamma w'phi_i+ - w'phi_i] phi_i
Eigen::VectorXd sarsa_teacher(const Trajectory& traj, const FeatureMap& features,
                              const Eigen::VectorXd& w, const TeacherConfig& cfg);

struct ActorCriticTarget {
  Eigen::VectorXd w;
  Eigen::VectorXd lambda;
};

/// Batch actor-critic. The score g_lambda uses the pre-update lambda.
ActorCriticTarget ac_teacher(const Trajectory& traj, const FeatureMap& value_features,
                             const FeatureMap& policy_features, const Eigen::VectorXd& w,
                             const Eigen::VectorXd& lambda, const TeacherConfig& cfg);

}  // namespace icrl

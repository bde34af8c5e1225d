#pragma once

#include <Eigen/Dense>

#include "icrl/mdp.hpp"
#include "icrl/rng.hpp"

namespace icrl {

enum class FeatureKind { state_action, state_value, policy };

struct FeatureDims {
  int n_states = 0;
  int n_actions = 0;
  int dim = 0;
};

/// Dense feature table. state_action and policy maps have one row per
/// (s, a) at index s * A + a; state_value maps have one row per state.
struct FeatureMap {
  FeatureKind kind = FeatureKind::state_action;
  int n_states = 0;
  int n_actions = 0;
  Eigen::MatrixXd table;

  int dim() const { return static_cast<int>(table.cols()); }
  bool per_action() const { return kind != FeatureKind::state_value; }

  Eigen::VectorXd at(int s, int a) const;
  Eigen::VectorXd at(int s) const;
  /// A x dim block of the features of every action in state s.
  Eigen::MatrixXd actions_of(int s) const;

  void validate() const;
};

/// i.i.d. Unif(-1, 1) entries.
FeatureMap sample_features(Rng& rng, FeatureKind kind, const FeatureDims& dims);

/// Q(s, a) = w' phi(s, a) for every pair; S x A.
Eigen::MatrixXd q_table(const FeatureMap& features, const Eigen::VectorXd& w);

/// Softmax logits lambda' phi_pi(s, a); S x A.
Eigen::MatrixXd logit_table(const FeatureMap& policy_features,
                            const Eigen::VectorXd& lambda);

/// pi_lambda(. | s), computed with max-subtraction.
Eigen::VectorXd softmax_policy(const FeatureMap& policy_features,
                               const Eigen::VectorXd& lambda, int s);

/// g_lambda(s, a) = phi_pi(s, a) - sum_b pi_lambda(b|s) phi_pi(s, b).
Eigen::VectorXd score_function(const FeatureMap& policy_features,
                               const Eigen::VectorXd& lambda, int s, int a);

}  // namespace icrl

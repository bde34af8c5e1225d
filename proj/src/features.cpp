#include "icrl/features.hpp"

#include "icrl/errors.hpp"

namespace icrl {

Eigen::VectorXd FeatureMap::at(int s, int a) const {
  detail::require(per_action(), "state_value features are indexed by state only");
  detail::require(s >= 0 && s < n_states && a >= 0 && a < n_actions,
                  "feature index out of range");
  return table.row(s * n_actions + a).transpose();
}

Eigen::VectorXd FeatureMap::at(int s) const {
  detail::require(!per_action(), "state-action features need an action index");
  detail::require(s >= 0 && s < n_states, "feature index out of range");
  return table.row(s).transpose();
}

Eigen::MatrixXd FeatureMap::actions_of(int s) const {
  detail::require(per_action(), "state_value features have no action rows");
  return table.middleRows(s * n_actions, n_actions);
}

void FeatureMap::validate() const {
  const Eigen::Index rows = per_action() ? Eigen::Index(n_states) * n_actions : n_states;
  detail::require(table.rows() == rows, "feature table row count mismatch");
  detail::require(table.cols() >= 1, "feature dimension must be positive");
  detail::require(table.allFinite(), "feature table has non-finite entries");
}

FeatureMap sample_features(Rng& rng, FeatureKind kind, const FeatureDims& dims) {
  detail::require_config(dims.n_states >= 1 && dims.dim >= 1,
                         "feature dimensions must be positive");
  detail::require_config(kind == FeatureKind::state_value || dims.n_actions >= 1,
                         "feature dimensions must be positive");
  FeatureMap fm;
  fm.kind = kind;
  fm.n_states = dims.n_states;
  fm.n_actions = dims.n_actions;
  const int rows = fm.per_action() ? dims.n_states * dims.n_actions : dims.n_states;
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  fm.table.resize(rows, dims.dim);
  // row-major fill so the table is stable if the storage order ever changes
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < dims.dim; ++c) fm.table(r, c) = unif(rng);
  return fm;
}

Eigen::MatrixXd q_table(const FeatureMap& features, const Eigen::VectorXd& w) {
  detail::require(features.per_action(), "Q-table needs state-action features");
  detail::require(w.size() == features.dim(),
                  "parameter dimension does not match the feature map");
  const Eigen::VectorXd flat = features.table * w;
  Eigen::MatrixXd q(features.n_states, features.n_actions);
  for (int s = 0; s < features.n_states; ++s)
    for (int a = 0; a < features.n_actions; ++a)
      q(s, a) = flat(s * features.n_actions + a);
  return q;
}

Eigen::MatrixXd logit_table(const FeatureMap& policy_features,
                            const Eigen::VectorXd& lambda) {
  return q_table(policy_features, lambda);
}

Eigen::VectorXd softmax_policy(const FeatureMap& policy_features,
                               const Eigen::VectorXd& lambda, int s) {
  detail::require(lambda.size() == policy_features.dim(),
                  "lambda dimension does not match the policy features");
  const Eigen::VectorXd logits = policy_features.actions_of(s) * lambda;
  Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

Eigen::VectorXd score_function(const FeatureMap& policy_features,
                               const Eigen::VectorXd& lambda, int s, int a) {
  const Eigen::VectorXd pi = softmax_policy(policy_features, lambda, s);
  const Eigen::MatrixXd phis = policy_features.actions_of(s);
  return policy_features.at(s, a) - phis.transpose() * pi;
}

}  // namespace icrl

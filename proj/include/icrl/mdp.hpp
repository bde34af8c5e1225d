#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "icrl/rng.hpp"

namespace icrl {

struct MdpConfig {
  int n_states = 5;
  int n_actions = 3;
  double discount = 0.5;
  double reward_low = -1.0;
  double reward_high = 1.0;

  void validate() const;
};

/// Finite continuing MDP. Transitions are stored as an (S*A) x S row-stochastic
/// matrix with row index s * A + a; rewards are indexed r(a, s'), paid on
/// arrival in s' after taking a.
class TabularMdp {
 public:
  TabularMdp(int n_states, int n_actions, Eigen::MatrixXd transition,
             Eigen::MatrixXd reward, Eigen::VectorXd initial_dist,
             double discount, double reward_low = -1.0,
             double reward_high = 1.0);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double discount() const { return discount_; }
  double reward_low() const { return reward_low_; }
  double reward_high() const { return reward_high_; }

  const Eigen::MatrixXd& transition() const { return transition_; }
  const Eigen::MatrixXd& reward() const { return reward_; }
  const Eigen::VectorXd& initial_dist() const { return initial_dist_; }

  double transition_prob(int s, int a, int next) const {
    return transition_(s * n_actions_ + a, next);
  }
  auto transition_row(int s, int a) const {
    return transition_.row(s * n_actions_ + a);
  }
  double reward(int a, int next) const { return reward_(a, next); }

  /// Expected immediate reward R(s, a) = sum_s' P(s'|s,a) r(a, s').
  Eigen::MatrixXd expected_reward() const;

  bool operator==(const TabularMdp& other) const;

 private:
  int n_states_;
  int n_actions_;
  Eigen::MatrixXd transition_;
  Eigen::MatrixXd reward_;
  Eigen::VectorXd initial_dist_;
  double discount_;
  double reward_low_;
  double reward_high_;
};

struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;

  /// Number of transitions n.
  int length() const { return static_cast<int>(rewards.size()); }
  void validate(const TabularMdp& mdp) const;
};

enum class PolicyKind { epsilon_greedy_q, softmax_actor, uniform_random, greedy_oracle };

/// Behaviour policy over a tabular MDP. `table` holds Q-values for the greedy
/// kinds and softmax logits for softmax_actor; it is (S x A) or empty for
/// uniform_random. Feature-based policies are built with q_table()/logit_table()
/// from features.hpp.
struct PolicySpec {
  PolicyKind kind = PolicyKind::uniform_random;
  double epsilon = 0.0;
  Eigen::MatrixXd table;

  static PolicySpec epsilon_greedy(Eigen::MatrixXd q, double epsilon);
  static PolicySpec softmax(Eigen::MatrixXd logits, double epsilon);
  static PolicySpec uniform();
  static PolicySpec greedy(Eigen::MatrixXd q);

  /// S x A matrix of action probabilities; each row sums to one.
  Eigen::MatrixXd action_probabilities(int n_states, int n_actions) const;
};

/// Index of the largest entry, ties broken towards the lowest index.
int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& row);

/// Draw an index from a probability vector.
int sample_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng);

TabularMdp sample_mdp(Rng& rng, const MdpConfig& cfg);

/// Samples n transitions under `policy` from `start_state`. The returned
/// trajectory carries n+1 state-action pairs; chain the next window from
/// states.back().
Trajectory rollout(const TabularMdp& mdp, const PolicySpec& policy,
                   int start_state, int n, Rng& rng);

/// Optimal Q-table (S x A) within sup-norm `tol` of the Bellman fixed point.
Eigen::MatrixXd value_iteration(const TabularMdp& mdp, double tol);

/// One Bellman optimality sweep; exposed for residual checks.
Eigen::MatrixXd bellman_optimality_sweep(const TabularMdp& mdp,
                                         const Eigen::MatrixXd& q);

/// State values of a stationary policy from the exact linear system
/// (I - gamma P_pi) v = r_pi.
Eigen::VectorXd policy_state_values(const TabularMdp& mdp, const PolicySpec& policy);

/// Expected discounted return from the initial distribution.
double exact_policy_return(const TabularMdp& mdp, const PolicySpec& policy);

}  // namespace icrl

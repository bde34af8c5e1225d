#include "icrl/mdp.hpp"

#include <cmath>
#include <sstream>

#include "icrl/errors.hpp"

namespace icrl {
namespace {

constexpr double kSimplexTol = 1e-12;

void check_simplex(const Eigen::Ref<const Eigen::RowVectorXd>& row,
                   const char* what) {
  if ((row.array() < 0.0).any() || !row.allFinite() ||
      std::abs(row.sum() - 1.0) > kSimplexTol) {
    std::ostringstream os;
    os << what << " is not a probability vector (sum=" << row.sum() << ")";
    throw ContractError(os.str());
  }
}

// Dirichlet(1,...,1) as normalised i.i.d. Exponential(1) draws.
Eigen::RowVectorXd uniform_simplex(int k, Rng& rng) {
  std::exponential_distribution<double> expo(1.0);
  Eigen::RowVectorXd x(k);
  for (int i = 0; i < k; ++i) x(i) = expo(rng);
  return x / x.sum();
}

}  // namespace

void MdpConfig::validate() const {
  detail::require_config(n_states >= 1, "n_states must be >= 1");
  detail::require_config(n_actions >= 1, "n_actions must be >= 1");
  detail::require_config(discount >= 0.0 && discount < 1.0,
                         "discount must lie in [0, 1)");
  detail::require_config(reward_low <= reward_high,
                         "reward range must satisfy low <= high");
}

TabularMdp::TabularMdp(int n_states, int n_actions, Eigen::MatrixXd transition,
                       Eigen::MatrixXd reward, Eigen::VectorXd initial_dist,
                       double discount, double reward_low, double reward_high)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      reward_(std::move(reward)),
      initial_dist_(std::move(initial_dist)),
      discount_(discount),
      reward_low_(reward_low),
      reward_high_(reward_high) {
  detail::require_config(n_states_ >= 1 && n_actions_ >= 1,
                         "MDP needs at least one state and one action");
  detail::require_config(discount_ >= 0.0 && discount_ < 1.0,
                         "discount must lie in [0, 1)");
  detail::require(transition_.rows() == n_states_ * n_actions_ &&
                      transition_.cols() == n_states_,
                  "transition must be (S*A) x S");
  detail::require(reward_.rows() == n_actions_ && reward_.cols() == n_states_,
                  "reward must be A x S");
  detail::require(initial_dist_.size() == n_states_,
                  "initial_dist must have S entries");
  for (Eigen::Index r = 0; r < transition_.rows(); ++r)
    check_simplex(transition_.row(r), "transition row");
  check_simplex(initial_dist_.transpose(), "initial_dist");
  detail::require(reward_.allFinite() &&
                      (reward_.array() >= reward_low_).all() &&
                      (reward_.array() <= reward_high_).all(),
                  "reward outside the configured range");
}

Eigen::MatrixXd TabularMdp::expected_reward() const {
  Eigen::MatrixXd r(n_states_, n_actions_);
  for (int s = 0; s < n_states_; ++s)
    for (int a = 0; a < n_actions_; ++a)
      r(s, a) = transition_row(s, a).dot(reward_.row(a));
  return r;
}

bool TabularMdp::operator==(const TabularMdp& other) const {
  return n_states_ == other.n_states_ && n_actions_ == other.n_actions_ &&
         discount_ == other.discount_ && transition_ == other.transition_ &&
         reward_ == other.reward_ && initial_dist_ == other.initial_dist_;
}

void Trajectory::validate(const TabularMdp& mdp) const {
  detail::require(states.size() == actions.size() &&
                      states.size() == rewards.size() + 1,
                  "trajectory needs |states| = |actions| = |rewards| + 1");
  for (int s : states)
    detail::require(s >= 0 && s < mdp.n_states(), "state index out of range");
  for (int a : actions)
    detail::require(a >= 0 && a < mdp.n_actions(), "action index out of range");
}

PolicySpec PolicySpec::epsilon_greedy(Eigen::MatrixXd q, double epsilon) {
  detail::require_config(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must lie in [0, 1]");
  return {PolicyKind::epsilon_greedy_q, epsilon, std::move(q)};
}

PolicySpec PolicySpec::softmax(Eigen::MatrixXd logits, double epsilon) {
  detail::require_config(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must lie in [0, 1]");
  return {PolicyKind::softmax_actor, epsilon, std::move(logits)};
}

PolicySpec PolicySpec::uniform() { return {PolicyKind::uniform_random, 1.0, {}}; }

PolicySpec PolicySpec::greedy(Eigen::MatrixXd q) {
  return {PolicyKind::greedy_oracle, 0.0, std::move(q)};
}

int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (int a = 1; a < row.size(); ++a)
    if (row(a) > row(best)) best = a;
  return best;
}

Eigen::MatrixXd PolicySpec::action_probabilities(int n_states, int n_actions) const {
  const double uniform_mass = 1.0 / n_actions;
  Eigen::MatrixXd probs = Eigen::MatrixXd::Constant(n_states, n_actions, uniform_mass);
  if (kind == PolicyKind::uniform_random) return probs;

  detail::require(table.rows() == n_states && table.cols() == n_actions,
                  "policy table shape does not match the MDP");
  const double eps = kind == PolicyKind::greedy_oracle ? 0.0 : epsilon;
  for (int s = 0; s < n_states; ++s) {
    Eigen::RowVectorXd base = Eigen::RowVectorXd::Zero(n_actions);
    if (kind == PolicyKind::softmax_actor) {
      Eigen::RowVectorXd z = table.row(s).array() - table.row(s).maxCoeff();
      base = z.array().exp();
      base /= base.sum();
    } else {
      base(argmax_lowest(table.row(s))) = 1.0;
    }
    probs.row(s) = (1.0 - eps) * base.array() + eps * uniform_mass;
  }
  return probs;
}

int sample_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng) {
  const double u = uniform01(rng);
  double cum = 0.0;
  int last_positive = 0;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    cum += probs(i);
    last_positive = i;
    if (u < cum) return i;
  }
  return last_positive;
}

TabularMdp sample_mdp(Rng& rng, const MdpConfig& cfg) {
  cfg.validate();
  const int ns = cfg.n_states;
  const int na = cfg.n_actions;
  Eigen::MatrixXd transition(ns * na, ns);
  for (int r = 0; r < ns * na; ++r) transition.row(r) = uniform_simplex(ns, rng);
  Eigen::VectorXd initial = uniform_simplex(ns, rng).transpose();
  std::uniform_real_distribution<double> unif(cfg.reward_low, cfg.reward_high);
  Eigen::MatrixXd reward(na, ns);
  for (int a = 0; a < na; ++a)
    for (int s = 0; s < ns; ++s) reward(a, s) = unif(rng);
  return TabularMdp(ns, na, std::move(transition), std::move(reward),
                    std::move(initial), cfg.discount, cfg.reward_low,
                    cfg.reward_high);
}

Trajectory rollout(const TabularMdp& mdp, const PolicySpec& policy,
                   int start_state, int n, Rng& rng) {
  detail::require(start_state >= 0 && start_state < mdp.n_states(),
                  "start state out of range");
  detail::require(n >= 0, "rollout length must be non-negative");
  const Eigen::MatrixXd probs =
      policy.action_probabilities(mdp.n_states(), mdp.n_actions());

  Trajectory traj;
  traj.states.reserve(n + 1);
  traj.actions.reserve(n + 1);
  traj.rewards.reserve(n);
  int s = start_state;
  int a = sample_categorical(probs.row(s), rng);
  traj.states.push_back(s);
  traj.actions.push_back(a);
  for (int i = 0; i < n; ++i) {
    const int next = sample_categorical(mdp.transition_row(s, a), rng);
    traj.rewards.push_back(mdp.reward(a, next));
    s = next;
    a = sample_categorical(probs.row(s), rng);
    traj.states.push_back(s);
    traj.actions.push_back(a);
  }
  return traj;
}

Eigen::MatrixXd bellman_optimality_sweep(const TabularMdp& mdp,
                                         const Eigen::MatrixXd& q) {
  const Eigen::VectorXd v = q.rowwise().maxCoeff();
  Eigen::MatrixXd out(mdp.n_states(), mdp.n_actions());
  for (int s = 0; s < mdp.n_states(); ++s)
    for (int a = 0; a < mdp.n_actions(); ++a)
      out(s, a) = mdp.transition_row(s, a).dot(
          mdp.reward().row(a).transpose() + mdp.discount() * v);
  return out;
}

Eigen::MatrixXd value_iteration(const TabularMdp& mdp, double tol) {
  detail::require(tol > 0.0, "value_iteration tolerance must be positive");
  const double gamma = mdp.discount();
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(mdp.n_states(), mdp.n_actions());
  // ||Q_{k+1} - Q*|| <= gamma/(1-gamma) ||Q_{k+1} - Q_k||
  const double stop = gamma > 0.0 ? tol * (1.0 - gamma) / gamma : 0.0;
  while (true) {
    Eigen::MatrixXd next = bellman_optimality_sweep(mdp, q);
    const double change = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (change <= stop) break;
  }
  return q;
}

Eigen::VectorXd policy_state_values(const TabularMdp& mdp, const PolicySpec& policy) {
  const int ns = mdp.n_states();
  const int na = mdp.n_actions();
  const Eigen::MatrixXd probs = policy.action_probabilities(ns, na);
  const Eigen::MatrixXd r_sa = mdp.expected_reward();

  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(ns, ns);
  Eigen::VectorXd r_pi = Eigen::VectorXd::Zero(ns);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) {
      p_pi.row(s) += probs(s, a) * mdp.transition_row(s, a);
      r_pi(s) += probs(s, a) * r_sa(s, a);
    }
  if (!(mdp.discount() < 1.0))
    throw NumericalError("policy evaluation requires discount < 1");
  const Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(ns, ns) - mdp.discount() * p_pi;
  return system.partialPivLu().solve(r_pi);
}

double exact_policy_return(const TabularMdp& mdp, const PolicySpec& policy) {
  return mdp.initial_dist().dot(policy_state_values(mdp, policy));
}

}  // namespace icrl

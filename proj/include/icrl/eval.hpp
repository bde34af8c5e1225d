#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "icrl/attention.hpp"
#include "icrl/features.hpp"
#include "icrl/mdp.hpp"
#include "icrl/prompt.hpp"
#include "icrl/rng.hpp"
#include "icrl/teachers.hpp"
#include "icrl/training.hpp"

namespace icrl {

enum class Agent { transformer = 0, teacher = 1, oracle = 2, random = 3 };
inline constexpr int kNumAgents = 4;
inline constexpr std::array<Agent, kNumAgents> kAllAgents{Agent::transformer, Agent::teacher,
                                                          Agent::oracle, Agent::random};

const char* to_string(Agent agent);
Agent agent_from_string(const std::string& s);
/// Comma separated list, e.g. "oracle,random".
std::vector<Agent> parse_agents(const std::string& list);

struct EvalConfig {
  PromptMode mode = PromptMode::sarsa;
  MdpConfig mdp;
  int d = 15;
  int m = 8;
  int window = 10;
  double epsilon = 0.1;
  TeacherConfig teacher;
  int num_test_mdps = 20;
  int update_steps = 100;
  int eval_interval = 10;
  int mc_rollouts = 32;
  int mc_horizon = 50;
  std::uint64_t seed = 0;
  std::vector<Agent> agents{kAllAgents.begin(), kAllAgents.end()};
  int jobs = 1;

  BlockLayout layout() const;
  /// gamma^H B_r / (1 - gamma), the worst-case truncation bias of mc_return.
  double truncation_bias() const;
  /// Throws ConfigError on bad values; returns warnings (truncation bias >= 1e-3).
  std::vector<std::string> validate() const;
  int num_checkpoints() const { return update_steps / eval_interval + 1; }

  /// Same family, dimensions, epsilon and teacher as training.
  static EvalConfig from(const TrainConfig& cfg);
};

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Mean over `rollouts` of sum_{k<horizon} gamma^k r_{k+1}, starts from initial_dist.
McEstimate mc_return(const TabularMdp& mdp, const PolicySpec& policy, int rollouts,
                     int horizon, Rng& rng);
McEstimate mc_return(const TabularMdp& mdp, const PolicySpec& policy, const EvalConfig& cfg,
                     Rng& rng);

struct AgentCurve {
  std::vector<double> returns;     // one per checkpoint reached
  std::vector<double> std_errors;
  bool truncated = false;          // non-finite parameters stopped the loop
};

struct MdpCurves {
  int mdp_id = 0;
  std::array<AgentCurve, kNumAgents> agents;

  const AgentCurve& operator[](Agent a) const { return agents[static_cast<int>(a)]; }
  AgentCurve& operator[](Agent a) { return agents[static_cast<int>(a)]; }
};

struct AggregateCurve {
  std::vector<double> mean;
  std::vector<double> p25;
  std::vector<double> p75;
  std::vector<int> count;  // MDPs contributing at each checkpoint
};

struct EvalCurves {
  std::vector<int> steps;  // update step of each checkpoint
  std::vector<Agent> agents;
  std::vector<MdpCurves> per_mdp;
  std::array<AggregateCurve, kNumAgents> aggregate;

  const AggregateCurve& operator[](Agent a) const { return aggregate[static_cast<int>(a)]; }
};

/// Linear-interpolation percentile (q in [0, 1]) of unsorted values.
double percentile(std::vector<double> values, double q);

/// Mean and 25/75 band per checkpoint; missing (truncated) points are skipped.
void aggregate_curves(EvalCurves& curves);

/// MDP, features and starting parameters of held-out MDP k.
struct HeldOutProblem {
  TabularMdp mdp;
  FeatureMap phi;     // SARSA features or phi_V
  FeatureMap phi_pi;  // actor features, AC only
  Eigen::VectorXd w0;
  Eigen::VectorXd lambda0;
};
HeldOutProblem draw_held_out(const EvalConfig& cfg, int k);

/// Deployment policy for (lambda, w): epsilon-greedy on Q (SARSA) or the
/// epsilon-mixed softmax actor (AC).
PolicySpec deployment_policy(const EvalConfig& cfg, const HeldOutProblem& p,
                             const Eigen::VectorXd& w, const Eigen::VectorXd& lambda);

/// Closed-loop deployment on held-out MDPs; transformer and teacher share
/// rollout and Monte-Carlo streams per MDP.
EvalCurves closed_loop_eval(const AttentionParams& params, const EvalConfig& cfg);

}  // namespace icrl

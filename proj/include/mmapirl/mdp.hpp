#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mmapirl/errors.hpp"

namespace mmapirl {

// Finite discounted MDP with dense per-action transition matrices.
//
// transitions[a](s, s') is the probability of landing in s' after taking
// action a in state s. Every row is a probability distribution. The initial
// distribution is over states only; action choice is always a policy's job.
struct DiscountedMdp {
  int num_states = 0;
  int num_actions = 0;
  std::vector<Eigen::MatrixXd> transitions;
  double discount = 0.0;
  Eigen::VectorXd initial_distribution;

  // Throws ValidationError naming the broken invariant: sizes, row sums
  // (tolerance 1e-9), negative entries, discount outside [0, 1).
  void validate() const;
};

struct RewardTable {
  Eigen::MatrixXd values;  // (s, a)
};

struct DeterministicPolicy {
  std::vector<int> action_of;  // one action index per state

  bool operator==(const DeterministicPolicy&) const = default;
};

struct StochasticPolicy {
  Eigen::MatrixXd probs;  // (s, a), rows sum to 1
};

struct ValueFunctions {
  Eigen::MatrixXd q;  // (s, a)
  Eigen::VectorXd v;  // per state; equals max_a q(s, a) for an optimal solve
};

struct SolveResult {
  DeterministicPolicy policy;
  ValueFunctions values;
};

// Index of the (state, action) pair in flattened vectors and chain matrices.
inline int flat_index(int state, int action, int num_actions) {
  return state * num_actions + action;
}

// Exact policy iteration. Each improvement step breaks ties toward the
// smallest action index, which makes the stable policy unique: it is the
// lowest-index greedy policy of the (unique) optimal value function, so the
// result does not depend on the warm start. Throws NumericalError with the
// last Bellman residual if the 10000-iteration safety cap is hit.
SolveResult solve_optimal(const DiscountedMdp& mdp, const RewardTable& reward,
                          const std::optional<DeterministicPolicy>& warm_start = {});

// Value of a fixed policy from the direct linear solve
// (I - discount * T_pi) v = r_pi. Throws NumericalError if the verified
// residual exceeds 1e-10 (relative to the reward scale).
Eigen::VectorXd evaluate_policy(const DiscountedMdp& mdp, const RewardTable& reward,
                                const DeterministicPolicy& policy);
Eigen::VectorXd evaluate_policy(const DiscountedMdp& mdp, const RewardTable& reward,
                                const StochasticPolicy& policy);

// q(s,a) = r(s,a) + discount * sum_s' T(s,a,s') v(s').
Eigen::MatrixXd q_from_values(const DiscountedMdp& mdp, const RewardTable& reward,
                              const Eigen::VectorXd& v);

// Row-wise softmax of beta * q with max subtraction, so beta = 0 gives the
// uniform policy and large beta approaches the greedy one without overflow.
StochasticPolicy boltzmann(const ValueFunctions& values, double beta);

StochasticPolicy to_stochastic(const DeterministicPolicy& policy, int num_actions);

}  // namespace mmapirl

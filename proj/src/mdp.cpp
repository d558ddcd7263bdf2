#include "mmapirl/mdp.hpp"

#include <cmath>
#include <string>

namespace mmapirl {

namespace {

constexpr double kRowSumTolerance = 1e-9;
constexpr int kPolicyIterationCap = 10000;

void check_reward(const DiscountedMdp& mdp, const RewardTable& reward) {
  if (reward.values.rows() != mdp.num_states ||
      reward.values.cols() != mdp.num_actions) {
    throw ValidationError("reward table shape " +
                          std::to_string(reward.values.rows()) + "x" +
                          std::to_string(reward.values.cols()) +
                          " does not match MDP " +
                          std::to_string(mdp.num_states) + "x" +
                          std::to_string(mdp.num_actions));
  }
  if (!reward.values.allFinite()) {
    throw ValidationError("reward table contains non-finite entries");
  }
}

void check_policy(const DiscountedMdp& mdp, const DeterministicPolicy& policy) {
  if (static_cast<int>(policy.action_of.size()) != mdp.num_states) {
    throw ValidationError("policy covers " +
                          std::to_string(policy.action_of.size()) +
                          " states, MDP has " + std::to_string(mdp.num_states));
  }
  for (int s = 0; s < mdp.num_states; ++s) {
    const int a = policy.action_of[s];
    if (a < 0 || a >= mdp.num_actions) {
      throw ValidationError("policy action " + std::to_string(a) +
                            " at state " + std::to_string(s) +
                            " out of range");
    }
  }
}

Eigen::VectorXd solve_linear_system(const Eigen::MatrixXd& system,
                                    const Eigen::VectorXd& rhs,
                                    double scale) {
  Eigen::VectorXd v = system.partialPivLu().solve(rhs);
  const double residual = (system * v - rhs).lpNorm<Eigen::Infinity>();
  if (!v.allFinite() || residual > 1e-10 * std::max(1.0, scale)) {
    throw NumericalError("policy evaluation residual " +
                         std::to_string(residual) + " exceeds tolerance");
  }
  return v;
}

}  // namespace

void DiscountedMdp::validate() const {
  if (num_states <= 0 || num_actions <= 0) {
    throw ValidationError("MDP must have at least one state and one action");
  }
  if (static_cast<int>(transitions.size()) != num_actions) {
    throw ValidationError("expected " + std::to_string(num_actions) +
                          " transition matrices, got " +
                          std::to_string(transitions.size()));
  }
  for (int a = 0; a < num_actions; ++a) {
    const Eigen::MatrixXd& t = transitions[a];
    if (t.rows() != num_states || t.cols() != num_states) {
      throw ValidationError("transition matrix for action " +
                            std::to_string(a) + " has wrong shape");
    }
    if ((t.array() < 0.0).any()) {
      throw ValidationError("transition matrix for action " +
                            std::to_string(a) + " has negative entries");
    }
    for (int s = 0; s < num_states; ++s) {
      const double sum = t.row(s).sum();
      if (std::abs(sum - 1.0) > kRowSumTolerance) {
        throw ValidationError("transition row (s=" + std::to_string(s) +
                              ", a=" + std::to_string(a) + ") sums to " +
                              std::to_string(sum));
      }
    }
  }
  if (discount < 0.0 || discount >= 1.0) {
    throw ValidationError("discount must lie in [0, 1), got " +
                          std::to_string(discount));
  }
  if (initial_distribution.size() != num_states) {
    throw ValidationError("initial distribution has wrong length");
  }
  if ((initial_distribution.array() < 0.0).any() ||
      std::abs(initial_distribution.sum() - 1.0) > kRowSumTolerance) {
    throw ValidationError("initial distribution is not a probability vector");
  }
}

Eigen::VectorXd evaluate_policy(const DiscountedMdp& mdp, const RewardTable& reward,
                                const DeterministicPolicy& policy) {
  check_reward(mdp, reward);
  check_policy(mdp, policy);
  const int n = mdp.num_states;
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd rhs(n);
  for (int s = 0; s < n; ++s) {
    const int a = policy.action_of[s];
    system.row(s) -= mdp.discount * mdp.transitions[a].row(s);
    rhs(s) = reward.values(s, a);
  }
  return solve_linear_system(system, rhs, rhs.lpNorm<Eigen::Infinity>());
}

Eigen::VectorXd evaluate_policy(const DiscountedMdp& mdp, const RewardTable& reward,
                                const StochasticPolicy& policy) {
  check_reward(mdp, reward);
  if (policy.probs.rows() != mdp.num_states ||
      policy.probs.cols() != mdp.num_actions) {
    throw ValidationError("stochastic policy has wrong shape");
  }
  const int n = mdp.num_states;
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (int a = 0; a < mdp.num_actions; ++a) {
    system -= mdp.discount * policy.probs.col(a).asDiagonal() * mdp.transitions[a];
    rhs += policy.probs.col(a).cwiseProduct(reward.values.col(a));
  }
  return solve_linear_system(system, rhs, rhs.lpNorm<Eigen::Infinity>());
}

Eigen::MatrixXd q_from_values(const DiscountedMdp& mdp, const RewardTable& reward,
                              const Eigen::VectorXd& v) {
  Eigen::MatrixXd q(mdp.num_states, mdp.num_actions);
  for (int a = 0; a < mdp.num_actions; ++a) {
    q.col(a) = reward.values.col(a) + mdp.discount * (mdp.transitions[a] * v);
  }
  return q;
}

namespace {

// Greedy policy with ties broken toward the smallest action index.
DeterministicPolicy greedy_policy(const Eigen::MatrixXd& q) {
  DeterministicPolicy policy;
  policy.action_of.resize(q.rows());
  for (int s = 0; s < q.rows(); ++s) {
    int best = 0;
    for (int a = 1; a < q.cols(); ++a) {
      if (q(s, a) > q(s, best)) best = a;
    }
    policy.action_of[s] = best;
  }
  return policy;
}

}  // namespace

SolveResult solve_optimal(const DiscountedMdp& mdp, const RewardTable& reward,
                          const std::optional<DeterministicPolicy>& warm_start) {
  mdp.validate();
  check_reward(mdp, reward);

  DeterministicPolicy policy;
  if (warm_start) {
    check_policy(mdp, *warm_start);
    policy = *warm_start;
  } else {
    policy = greedy_policy(reward.values);
  }

  Eigen::VectorXd v;
  Eigen::MatrixXd q;
  for (int iter = 0; iter < kPolicyIterationCap; ++iter) {
    v = evaluate_policy(mdp, reward, policy);
    q = q_from_values(mdp, reward, v);
    DeterministicPolicy improved = greedy_policy(q);
    if (improved == policy) {
      return {policy, {q, v}};
    }
    policy = improved;
  }
  const double residual =
      (q.rowwise().maxCoeff() - v).lpNorm<Eigen::Infinity>();
  throw NumericalError("policy iteration hit the iteration cap; last residual " +
                       std::to_string(residual));
}

StochasticPolicy boltzmann(const ValueFunctions& values, double beta) {
  if (beta < 0.0 || !std::isfinite(beta)) {
    throw ValidationError("boltzmann temperature parameter must be finite and >= 0");
  }
  if (!values.q.allFinite()) {
    throw ValidationError("boltzmann input q contains non-finite entries");
  }
  StochasticPolicy policy;
  policy.probs.resize(values.q.rows(), values.q.cols());
  for (int s = 0; s < values.q.rows(); ++s) {
    Eigen::VectorXd z = beta * values.q.row(s).transpose();
    z.array() -= z.maxCoeff();
    Eigen::VectorXd e = z.array().exp();
    policy.probs.row(s) = (e / e.sum()).transpose();
  }
  return policy;
}

StochasticPolicy to_stochastic(const DeterministicPolicy& policy, int num_actions) {
  StochasticPolicy out;
  out.probs = Eigen::MatrixXd::Zero(policy.action_of.size(), num_actions);
  for (int s = 0; s < static_cast<int>(policy.action_of.size()); ++s) {
    out.probs(s, policy.action_of[s]) = 1.0;
  }
  return out;
}

}  // namespace mmapirl

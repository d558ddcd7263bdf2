#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mmapirl/mdp.hpp"
#include "mmapirl/observation.hpp"
#include "mmapirl/reward.hpp"

namespace mmapirl {

// Demonstrations are modelled as a hidden Markov chain over state-action
// pairs x = (s, a), indexed by flat_index. The chain moves with
// M(x, x') = T(s, a, s') pi(a' | s') and starts from rho(s) pi(a | s); each
// recorded step emits an observation symbol, and occluded steps emit nothing.

Eigen::MatrixXd chain_transition_matrix(const DiscountedMdp& mdp,
                                        const StochasticPolicy& policy);

Eigen::VectorXd chain_initial_distribution(const DiscountedMdp& mdp,
                                           const StochasticPolicy& policy);

struct PosteriorMarginals {
  double log_likelihood = 0.0;
  // single[t](x) = P(X_t = x | observations); one entry per timestep.
  std::vector<Eigen::VectorXd> single;
  // pairwise[t](x, x') = P(X_t = x, X_t+1 = x' | observations); filled only
  // on request, since most callers need just the visit vector.
  std::vector<Eigen::MatrixXd> pairwise;
};

// Scaled forward-backward pass over one trajectory. `start` and `chain` come
// from the two builders above (or any caller-supplied substitute, e.g. a
// mid-trajectory occupancy for a visible segment). Throws ZeroLikelihoodError
// when the observations have probability exactly zero under the model, which
// is a modelling mismatch rather than numerical underflow.
PosteriorMarginals forward_backward_chain(const Eigen::VectorXd& start,
                                          const Eigen::MatrixXd& chain,
                                          const ObservationModel& observation,
                                          const ObservedTrajectory& trajectory,
                                          bool want_pairwise = false);

PosteriorMarginals forward_backward(const DiscountedMdp& mdp,
                                    const StochasticPolicy& policy,
                                    const ObservationModel& observation,
                                    const ObservedTrajectory& trajectory,
                                    bool want_pairwise = false);

// Exhaustive reference: the exact probability of the observed trajectory,
// summed over every completion of the hidden chain. Returns a plain
// probability (possibly 0). Refuses instances with more than ten million
// completions.
double brute_force_likelihood(const DiscountedMdp& mdp,
                              const StochasticPolicy& policy,
                              const ObservationModel& observation,
                              const ObservedTrajectory& trajectory);

// d q(s, a) / d theta_k for the reward-linear action values of `policy`:
// column k solves (I - discount * T Pi) x = phi_k with Pi the policy's
// action-choice matrix. Rows are flat (s, a) pairs. The ascent passes the
// one-hot optimal policy here, which makes the result constant across the
// policy's optimality region.
Eigen::MatrixXd q_gradient(const DiscountedMdp& mdp,
                           const StochasticPolicy& policy,
                           const FeatureMap& features);

// d log pi(a | s) / d theta_k for the softmax policy with inverse
// temperature beta: beta * (dq(x, k) - sum_a' pi(a'|s) dq((s, a'), k)).
Eigen::MatrixXd policy_score(const DiscountedMdp& mdp,
                             const StochasticPolicy& soft_policy,
                             const Eigen::MatrixXd& dq, double beta);

// Half-space description of the rewards for which a fixed policy stays
// optimal. Rows are indexed by (state, non-policy action) pairs, columns by
// flattened (s, a) reward coordinates, and each row evaluates
// Q(s, policy(s)) - Q(s, a); the policy is optimal exactly when every row
// dotted with the reward vector is non-negative.
struct OptimalityRegion {
  Eigen::MatrixXd halfspaces;
};

OptimalityRegion reward_optimality_region(const DiscountedMdp& mdp,
                                          const DeterministicPolicy& policy);

// True when the new reward keeps the cached policy optimal (region test
// passes), meaning the stored policy and its q-gradient can be reused
// without re-solving the MDP.
bool gradient_reusable(const OptimalityRegion& region, const RewardTable& reward);

// Gradient of the log marginal likelihood at theta. The policy is derived
// from theta by an optimal solve followed by the softmax; the gradient sums
// the per-step policy scores weighted by the smoothed posterior visit
// probabilities from forward-backward. Throws ZeroLikelihoodError naming the
// trajectory index when one trajectory is impossible under the model.
Eigen::VectorXd likelihood_gradient(const DiscountedMdp& mdp,
                                    const Eigen::VectorXd& theta,
                                    const std::vector<ObservedTrajectory>& trajectories,
                                    const ObservationModel& observation,
                                    const FeatureMap& features, double beta,
                                    int jobs = 1);

struct AscentConfig {
  double beta = 0.03;
  double step_size = 0.01;
  double decay = 0.95;
  double epsilon = 1e-4;
  double discount = 0.99;  // must match the MDP it is used with
  int max_iterations = 500;
  double prior_gradient_scale = 1.0;
  bool cache_enabled = true;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

// One cached ascent entry: a previously optimal policy, the reward region
// where it stays optimal, and the most recent gradient evaluated inside
// that region.
struct GradientCacheEntry {
  DeterministicPolicy policy;
  OptimalityRegion region;
  Eigen::VectorXd gradient;
};

struct IterationRecord {
  int iteration = 0;
  double log_posterior = 0.0;
  double gradient_norm = 0.0;
  double step_delta = 0.0;
  bool cache_hit = false;
  bool boundary_crossed = false;
  std::int64_t wall_us = 0;
};

struct AscentDiagnostics {
  std::vector<IterationRecord> iterations;
  bool converged = false;
  int cache_hits = 0;
  int policy_solves = 0;
};

std::string diagnostics_csv(const AscentDiagnostics& diagnostics);

struct LearnResult {
  FeatureWeights weights;
  AscentDiagnostics diagnostics;
};

// Log posterior of the weights given partially observed trajectories,
// together with its gradient (likelihood part as in likelihood_gradient,
// plus the Gaussian prior term).
struct PosteriorEvaluation {
  double log_posterior = 0.0;
  double log_likelihood = 0.0;
  double log_prior = 0.0;
  Eigen::VectorXd gradient;
};

PosteriorEvaluation evaluate_posterior(
    const DiscountedMdp& mdp,
    const std::vector<ObservedTrajectory>& trajectories,
    const ObservationModel& observation, const FeatureMap& features,
    const GaussianPrior& prior, const Eigen::VectorXd& theta,
    const AscentConfig& config);

// Marginal-MAP learner: gradient ascent on the log posterior above, starting
// from a prior sample. Weights are stepped by step_size * decay^(n-1) along
// the gradient; the run stops when the sup-norm reward change drops below
// epsilon * (1 - discount) / discount or at max_iterations. A cache of
// (policy, optimality region, gradient) entries skips the MDP and
// q-gradient solves whenever the new reward stays inside a cached region.
// Throws NumericalError if the weights diverge to non-finite values.
LearnResult mmap_birl(const DiscountedMdp& mdp,
                      const std::vector<ObservedTrajectory>& trajectories,
                      const ObservationModel& observation,
                      const FeatureMap& features, const GaussianPrior& prior,
                      const AscentConfig& config);

}  // namespace mmapirl

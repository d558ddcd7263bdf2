#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "mmapirl/inference.hpp"

namespace mmapirl::detail {

// One fully evaluated weight vector: the optimal solve, the softmax policy it
// induces, the chain view of that policy, and the per-pair score matrix. The
// data terms below consume this and return the piece that differs between
// learners (full marginal likelihood, visible segments, frozen posteriors).
struct AscentState {
  Eigen::VectorXd theta;
  Eigen::MatrixXd reward;
  SolveResult solve;
  StochasticPolicy soft;
  Eigen::MatrixXd chain;
  Eigen::VectorXd chain_start;
  Eigen::MatrixXd score;
  bool cache_hit = false;
  bool boundary_crossed = false;
};

struct DataEvaluation {
  double log_data = 0.0;
  Eigen::VectorXd visits;
};

using DataTerm = std::function<DataEvaluation(const AscentState&)>;

// Builds AscentStates while maintaining the optimality-region cache. A cache
// hit certifies that a stored policy is still optimal at the new weights, so
// the policy solve and the q-gradient solve are skipped; the action values
// themselves are recomputed exactly as the solver's final iteration would,
// which keeps cached and uncached runs on identical arithmetic.
class StateBuilder {
 public:
  StateBuilder(const DiscountedMdp& mdp, const FeatureMap& features,
               double beta, bool cache_enabled)
      : mdp_(mdp), features_(features), beta_(beta), cache_enabled_(cache_enabled) {}

  AscentState build(const Eigen::VectorXd& theta);

  // Stores the most recent gradient on the active cache entry.
  void note_gradient(const Eigen::VectorXd& gradient);

  int cache_hits() const { return cache_hits_; }
  int policy_solves() const { return policy_solves_; }

 private:
  struct Entry : GradientCacheEntry {
    Eigen::MatrixXd dq;
  };

  const DiscountedMdp& mdp_;
  const FeatureMap& features_;
  double beta_;
  bool cache_enabled_;
  std::vector<Entry> entries_;
  std::optional<DeterministicPolicy> last_policy_;
  int active_entry_ = -1;
  int cache_hits_ = 0;
  int policy_solves_ = 0;
};

// Shared ascent loop: fixed step schedule step_size * decay^(n-1), stopping
// when the sup-norm reward change falls below epsilon * (1 - g) / g or the
// iteration cap is reached. Iteration 0 records the starting point. When
// return_best is set the iterate with the highest recorded objective is
// returned instead of the last one (the expectation-maximization M step
// wants the guarantee, plain ascent keeps the final point).
LearnResult run_ascent(const DiscountedMdp& mdp, const FeatureMap& features,
                       const GaussianPrior& prior, const AscentConfig& config,
                       Eigen::VectorXd theta, const DataTerm& data_term,
                       bool return_best);

// Data term of the marginal likelihood: forward-backward over every
// trajectory, occluded steps integrated out.
DataTerm make_marginal_data_term(const ObservationModel& observation,
                                 const std::vector<ObservedTrajectory>& trajectories,
                                 int jobs);

}  // namespace mmapirl::detail

#pragma once

#include <vector>

#include "mmapirl/inference.hpp"

namespace mmapirl {

// How the occlusion-ignoring baseline restarts the chain at the head of each
// visible segment. PolicyOccupancy uses the policy-induced state-action
// occupancy at the segment's time offset, so dropping nothing reduces the
// baseline to the full marginal objective; UniformStates restarts from a
// uniform state with the policy's action choice, for sensitivity checks.
enum class SegmentStart { PolicyOccupancy, UniformStates };

// MAP ascent over the visible portions only: each maximal run of
// non-occluded steps is scored as its own short chain and the occluded steps
// contribute nothing. Perception noise is still handled exactly within the
// segments.
LearnResult ignore_occlusion_map_birl(
    const DiscountedMdp& mdp, const std::vector<ObservedTrajectory>& trajectories,
    const ObservationModel& observation, const FeatureMap& features,
    const GaussianPrior& prior, const AscentConfig& config,
    SegmentStart segment_start = SegmentStart::PolicyOccupancy);

struct EmConfig {
  AscentConfig ascent;  // max_iterations bounds each maximization round
  int max_rounds = 10;
  double tolerance = 1e-3;  // max-norm weight change that ends the rounds

  void validate() const;
};

struct EmRoundRecord {
  int round = 0;
  // Expected complete-data log posterior under the round's frozen
  // posteriors, before and after the maximization step.
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
  double log_posterior = 0.0;  // true marginal log posterior after the round
  double theta_delta = 0.0;
  AscentDiagnostics inner;
};

struct EmDiagnostics {
  std::vector<EmRoundRecord> rounds;
  bool converged = false;
};

struct EmResult {
  FeatureWeights weights;
  EmDiagnostics diagnostics;
};

// Expectation-maximization over the hidden steps: the E step freezes the
// forward-backward posteriors at the current weights, the M step runs the
// shared MAP ascent on the expected complete-data log posterior and keeps
// its best iterate, so each round's surrogate never decreases. Rounds stop
// when the weights move less than `tolerance` in max-norm, when the
// posteriors stop changing, or at max_rounds.
EmResult hidden_data_em(const DiscountedMdp& mdp,
                        const std::vector<ObservedTrajectory>& trajectories,
                        const ObservationModel& observation,
                        const FeatureMap& features, const GaussianPrior& prior,
                        const EmConfig& config);

}  // namespace mmapirl

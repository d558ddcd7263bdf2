#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mmapirl/mdp.hpp"
#include "mmapirl/rng.hpp"

namespace mmapirl {

// Noisy perception of state-action pairs. Row x = s * num_actions + a holds
// the distribution over observation symbols emitted when the true pair is
// (s, a). The default symbol space is the flattened pairs themselves.
struct ObservationModel {
  int num_actions = 0;  // column stride of the flattened (s, a) row index
  int num_observations = 0;
  Eigen::MatrixXd prob;  // (s * A + a, o), rows sum to 1

  void validate(int num_states, int num_actions) const;
};

inline int encode_state_action(int state, int action, int num_actions) {
  return state * num_actions + action;
}

inline std::pair<int, int> decode_state_action(int code, int num_actions) {
  return {code / num_actions, code % num_actions};
}

ObservationModel identity_observation_model(int num_states, int num_actions);

// One recorded timestep: either an observation symbol or an occlusion mark.
// Occluded steps are kept in place, never deleted, so indices stay aligned
// with the underlying trajectory.
struct TimestepRecord {
  std::optional<int> observation;

  bool occluded() const { return !observation.has_value(); }

  static TimestepRecord observed(int symbol) { return {symbol}; }
  static TimestepRecord hidden() { return {std::nullopt}; }
};

struct ObservedTrajectory {
  std::vector<TimestepRecord> records;

  int length() const { return static_cast<int>(records.size()); }
};

struct GroundTruthTrajectory {
  std::vector<std::pair<int, int>> steps;  // (state, action) per timestep
};

enum class OcclusionMode { ContiguousBlock, IidPerStep };

struct OcclusionSpec {
  OcclusionMode mode = OcclusionMode::ContiguousBlock;
  double rate = 0.0;

  void validate() const;
};

int sample_observation(const ObservationModel& model, int state, int action, Rng& rng);

// ContiguousBlock hides one run of round(rate * T) consecutive steps with a
// uniformly random start; IidPerStep hides each step independently with
// probability rate.
ObservedTrajectory apply_occlusion(const std::vector<int>& observations,
                                   const OcclusionSpec& spec, Rng& rng);

struct DemonstrationSet {
  std::vector<ObservedTrajectory> observed;
  std::vector<GroundTruthTrajectory> truth;
};

// Rolls out the expert policy, pushes every step through the observation
// model, then applies occlusion. Trajectory i draws from sub-streams
// (seed, "gen", i) and (seed, "occ", i), so results are identical however
// the work is scheduled and occlusion can be toggled without changing the
// underlying trajectories.
DemonstrationSet simulate_demonstrations(const DiscountedMdp& mdp,
                                         const StochasticPolicy& expert,
                                         const ObservationModel& model,
                                         int horizon, const OcclusionSpec& occlusion,
                                         int num_trajectories, std::uint64_t seed);

// --- batch file format -----------------------------------------------------
//
// Optional `# ...` comment lines (readers skip them until the header), then
// a header line:  T=<horizon> N=<count> O=<num_observations>
// Then one line per trajectory: space-separated observation indices, with
// '#' marking an occluded step. Round-trips bit-exactly.

struct TrajectoryBatch {
  int horizon = 0;
  int num_observations = 0;
  std::vector<ObservedTrajectory> trajectories;
};

void write_trajectories(const std::string& path, const TrajectoryBatch& batch,
                        const std::vector<std::string>& comments = {});
TrajectoryBatch read_trajectories(const std::string& path);

// Ground-truth sidecar: header "T=<horizon> N=<count> S=<states> A=<actions>",
// then one line per trajectory of comma-joined "s,a" tokens.
void write_ground_truth(const std::string& path,
                        const std::vector<GroundTruthTrajectory>& truth,
                        int num_states, int num_actions,
                        const std::vector<std::string>& comments = {});
std::vector<GroundTruthTrajectory> read_ground_truth(const std::string& path);

}  // namespace mmapirl

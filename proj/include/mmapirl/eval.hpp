#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmapirl/baselines.hpp"
#include "mmapirl/envs.hpp"
#include "mmapirl/inference.hpp"

namespace mmapirl {

enum class IleNorm { AbsolutePerState, SquaredPerState };

// Sum over states of the (absolute or squared) gap between the expert's and
// the learner's state values, both evaluated under the true reward.
double inverse_learning_error(const DiscountedMdp& mdp, const RewardTable& true_reward,
                              const DeterministicPolicy& expert_policy,
                              const DeterministicPolicy& learned_policy,
                              IleNorm norm = IleNorm::AbsolutePerState);

struct ConfusionCounts {
  int tp = 0;  // blemished onions in the bin
  int fp = 0;  // good onions in the bin
  int tn = 0;  // good onions left on the conveyor
  int fn = 0;  // blemished onions left on the conveyor

  void validate() const;
};

// Empty optionals mark an undefined ratio (zero denominator), never NaN.
struct PrecisionRecall {
  std::optional<double> precision;
  std::optional<double> recall;
};

PrecisionRecall precision_recall(const ConfusionCounts& counts);

// Runs `policy` through a stream of onions whose true class is drawn from
// the environment's blemish rate; inspecting a held unclassified onion
// reveals its true class. An onion's episode ends when it is placed (bin or
// conveyor) or after a step cap; unplaced onions count as not binned. The
// end effector position carries over between onions.
ConfusionCounts simulate_sort(const Environment& env,
                              const DeterministicPolicy& policy, int num_onions,
                              std::uint64_t seed);

struct SweepConfig {
  std::string environment = "forestworld";
  std::vector<double> occlusion_levels;
  std::vector<double> noise_levels;
  std::vector<std::string> methods;  // any of "mmap", "ignore", "em"
  int batches = 10;
  int trajectories_per_batch = 10;
  int horizon = 10;
  OcclusionMode occlusion_mode = OcclusionMode::ContiguousBlock;
  std::uint64_t seed = 0;
  AscentConfig ascent;
  int em_max_rounds = 10;
  double em_tolerance = 1e-3;
  int em_inner_iterations = 60;
  double prior_mean = -1.0;
  double prior_variance = 0.5;
  SegmentStart segment_start = SegmentStart::PolicyOccupancy;
  double blemish_rate = 0.5;

  void validate() const;
};

struct SweepRow {
  std::string method;
  double occlusion = 0.0;
  double noise = 0.0;
  int batch_count = 0;
  double ile_mean = 0.0;
  double ile_se = 0.0;
  double time_mean_s = 0.0;
  double time_se_s = 0.0;
  bool failed = false;
  std::string error;
};

struct SweepTable {
  std::vector<SweepRow> rows;
};

// Unified entry point for the three learners; `method` is one of "mmap",
// "ignore", "em". For "em" the expectation-maximization rounds wrap an inner
// ascent capped at em_inner_iterations with the same hyperparameters.
struct MethodResult {
  FeatureWeights weights;
  AscentDiagnostics ascent;            // mmap and ignore
  std::optional<EmDiagnostics> em;     // em only
  bool converged = false;
};

MethodResult learn_with_method(const std::string& method, const Environment& env,
                               const std::vector<ObservedTrajectory>& trajectories,
                               const GaussianPrior& prior, const AscentConfig& ascent,
                               int em_max_rounds, double em_tolerance,
                               int em_inner_iterations, SegmentStart segment_start);

GaussianPrior broadcast_prior(int num_features, double mean, double variance);

// One cell per (method, occlusion, noise): `batches` demonstration batches
// are generated from the optimal expert, each method learns on the same
// batches with the same starting weights (batch seeds never depend on the
// method), and the cell reports the mean and standard error of the ILE and
// of the learner wall time. A throwing cell is marked failed and the sweep
// continues. Rows in `skip` (matched by method, occlusion, noise) are copied
// over instead of recomputed, which makes interrupted sweeps resumable.
SweepTable run_sweep(const SweepConfig& config,
                     const std::vector<SweepRow>& skip = {});

// Pinned table format: `# ` comment lines carrying the resolved config, then
// the header `method,occlusion,noise,batch_count,ile_mean,ile_se,time_mean_s,
// time_se_s` and one row per cell. Failed cells carry nan means and a
// `# failed ...` comment line directly above the row.
std::string sweep_csv(const SweepTable& table,
                      const std::vector<std::string>& config_comments);

// Parses rows from sweep_csv output (comments ignored); used for resume.
SweepTable parse_sweep_csv(const std::string& text);

}  // namespace mmapirl

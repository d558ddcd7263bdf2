#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmapirl/eval.hpp"

namespace mmapirl {

// Flat key-value experiment description with [section] headers, `#` comments,
// and space-separated lists. serialize_config emits the canonical form;
// parse_config(serialize_config(c)) reproduces c exactly. The [run] seed key
// is mandatory so every run's randomness is pinned explicitly.
struct ExperimentConfig {
  // [environment]
  std::string environment = "forestworld";
  double noise = 0.3;
  double blemish_rate = 0.5;

  // [demonstrations]
  int count = 10;
  int horizon = 10;
  OcclusionMode occlusion_mode = OcclusionMode::ContiguousBlock;
  double occlusion_rate = 0.2;

  // [ascent]; seed and jobs are injected from [run] by resolved_ascent.
  AscentConfig ascent;
  SegmentStart segment_start = SegmentStart::PolicyOccupancy;

  // [em]
  int em_max_rounds = 10;
  double em_tolerance = 1e-3;
  int em_inner_iterations = 60;

  // [prior]
  double prior_mean = -1.0;
  double prior_variance = 0.5;

  // [run]
  std::uint64_t seed = 0;
  std::string method = "mmap";
  int jobs = 1;
  int onions = 100;

  // [sweep]
  std::vector<double> occlusion_levels{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> noise_levels{0.0, 0.1, 0.2, 0.3};
  int batches = 10;
  int trajectories = 10;
  std::vector<std::string> methods{"mmap", "ignore", "em"};

  void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
std::string serialize_config(const ExperimentConfig& config);

AscentConfig resolved_ascent(const ExperimentConfig& config);
GaussianPrior make_prior(const ExperimentConfig& config, int num_features);
SweepConfig to_sweep(const ExperimentConfig& config);

}  // namespace mmapirl

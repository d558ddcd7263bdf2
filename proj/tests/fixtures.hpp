#pragma once

// Seeded random fixtures shared by the test binaries. Everything is built
// with the library's own RNG so fixtures are identical across platforms.

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include "mmapirl/mdp.hpp"
#include "mmapirl/observation.hpp"
#include "mmapirl/reward.hpp"
#include "mmapirl/rng.hpp"

namespace fixtures {

inline mmapirl::StochasticPolicy random_policy(int states, int actions,
                                               std::uint64_t seed) {
  using namespace mmapirl;
  Rng rng = make_rng(seed);
  StochasticPolicy policy;
  policy.probs.resize(states, actions);
  for (int s = 0; s < states; ++s) {
    double total = 0.0;
    for (int a = 0; a < actions; ++a) {
      const double w = -std::log(1.0 - next_unit(rng));
      policy.probs(s, a) = w;
      total += w;
    }
    policy.probs.row(s) /= total;
  }
  return policy;
}

// Dense observation model: every symbol has positive probability from every
// pair, so arbitrary symbol sequences are never impossible.
inline mmapirl::ObservationModel random_observation_model(int states, int actions,
                                                          int symbols,
                                                          std::uint64_t seed) {
  using namespace mmapirl;
  Rng rng = make_rng(seed);
  ObservationModel model;
  model.num_actions = actions;
  model.num_observations = symbols;
  model.prob.resize(states * actions, symbols);
  for (int row = 0; row < states * actions; ++row) {
    double total = 0.0;
    for (int o = 0; o < symbols; ++o) {
      const double w = -std::log(1.0 - next_unit(rng));
      model.prob(row, o) = w;
      total += w;
    }
    model.prob.row(row) /= total;
  }
  return model;
}

inline mmapirl::FeatureMap random_features(int states, int actions, int count,
                                           std::uint64_t seed) {
  using namespace mmapirl;
  Rng rng = make_rng(seed);
  FeatureMap features;
  features.num_features = count;
  features.phi.resize(count);
  for (int k = 0; k < count; ++k) {
    features.phi[k].resize(states, actions);
    for (int s = 0; s < states; ++s) {
      for (int a = 0; a < actions; ++a) features.phi[k](s, a) = next_unit(rng);
    }
  }
  return features;
}

inline mmapirl::ObservedTrajectory random_records(int horizon, int symbols,
                                                  double hide_probability,
                                                  mmapirl::Rng& rng) {
  using namespace mmapirl;
  ObservedTrajectory trajectory;
  trajectory.records.reserve(horizon);
  for (int t = 0; t < horizon; ++t) {
    if (next_unit(rng) < hide_probability) {
      trajectory.records.push_back(TimestepRecord::hidden());
    } else {
      trajectory.records.push_back(
          TimestepRecord::observed(next_int(rng, 0, symbols - 1)));
    }
  }
  return trajectory;
}

inline mmapirl::ObservedTrajectory hidden_trajectory(int horizon) {
  mmapirl::ObservedTrajectory trajectory;
  trajectory.records.assign(horizon, mmapirl::TimestepRecord::hidden());
  return trajectory;
}

}  // namespace fixtures

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace mmapirl {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Bijective, well-mixed; used to derive uncorrelated
// engine seeds from (seed, stream name, indices).
std::uint64_t mix64(std::uint64_t x);

// Seed for a named sub-stream of a master seed. Different names or indices
// give independent streams, so toggling one consumer (say, occlusion) never
// perturbs another (trajectory generation).
std::uint64_t substream(std::uint64_t seed, std::string_view name,
                        std::uint64_t a = 0, std::uint64_t b = 0);

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Uniform double in [0, 1) built from the top 53 bits of one engine draw.
// Explicit construction keeps the mapping identical everywhere.
inline double next_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller with no cached second value, so the number
// of engine draws per call is fixed.
double next_gaussian(Rng& rng);

// Uniform integer in [lo, hi] inclusive.
int next_int(Rng& rng, int lo, int hi);

// Index sampled proportionally to non-negative weights that sum to ~1.
// Inverse-CDF scan; falls back to the last positive entry if rounding leaves
// the cumulative sum short of the draw.
template <class Derived>
int sample_index(const Eigen::DenseBase<Derived>& weights, Rng& rng) {
  const double u = next_unit(rng);
  double acc = 0.0;
  int last_positive = -1;
  for (int i = 0; i < static_cast<int>(weights.size()); ++i) {
    const double w = weights(i);
    if (w > 0.0) last_positive = i;
    acc += w;
    if (u < acc) return i;
  }
  return last_positive;
}

}  // namespace mmapirl

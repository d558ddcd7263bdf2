#include "mmapirl/rng.hpp"

#include <cmath>
#include <numbers>

namespace mmapirl {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t substream(std::uint64_t seed, std::string_view name,
                        std::uint64_t a, std::uint64_t b) {
  // FNV-1a over the name, then fold in the indices through the finalizer.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  h = mix64(h ^ mix64(seed));
  h = mix64(h ^ mix64(a ^ 0x517cc1b727220a95ull));
  h = mix64(h ^ mix64(b ^ 0x2545f4914f6cdd1dull));
  return h;
}

double next_gaussian(Rng& rng) {
  const double u1 = 1.0 - next_unit(rng);  // (0, 1], keeps log finite
  const double u2 = next_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

int next_int(Rng& rng, int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % span;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return lo + static_cast<int>(draw % span);
}

}  // namespace mmapirl

#pragma once

#include <stdexcept>
#include <string>

namespace mmapirl {

// Invalid model or argument: dimension mismatch, non-stochastic rows,
// out-of-range rates, malformed files. The message names the offending field.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A solver failed to meet its contract (iteration cap hit, residual too
// large, non-finite iterates). The message carries the last diagnostic value.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The evidence has probability exactly zero under the model. Distinct from
// underflow: per-step scaling keeps the recursion in range, so a zero scaling
// constant means no trajectory is consistent with the observations.
struct ZeroLikelihoodError : std::runtime_error {
  ZeroLikelihoodError(const std::string& msg, int trajectory, int timestep)
      : std::runtime_error(msg), trajectory(trajectory), timestep(timestep) {}

  int trajectory;  // -1 when not evaluated in a batch context
  int timestep;    // 0-based step at which the evidence became impossible
};

}  // namespace mmapirl

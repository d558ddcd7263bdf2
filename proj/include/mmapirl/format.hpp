#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace mmapirl {

// Shortest decimal form that parses back to exactly the same double;
// locale-independent, so file output is stable across machines.
inline std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

}  // namespace mmapirl

#pragma once

#include <charconv>
#include <string>

namespace odcs {

/// Shortest decimal form that round-trips the exact value (std::to_chars).
/// Used everywhere numbers are serialized so logs and configs are stable
/// byte for byte.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string format_float(float v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace odcs

#pragma once

#include <charconv>
#include <string>

namespace ctp {

/// Shortest round-trip decimal form, independent of the C locale.
inline std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace ctp

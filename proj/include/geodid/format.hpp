#pragma once

// Canonical number rendering: integers print without a decimal point,
// everything else uses the shortest digit string that round-trips, so
// repeated runs emit byte-identical files.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <string>

namespace geodid {

namespace detail {

inline bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace detail

inline std::string format_number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 9.007199254740992e15) {
    const auto i = static_cast<std::int64_t>(v);
    char buf[24];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), i);
    return std::string(buf, p);
  }
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace geodid

#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>
#include <system_error>

#include <opticenter/errors.hpp>

namespace opticenter {

/// Shortest round-trip decimal representation. Locale independent, so file
/// outputs are byte-stable across runs.
inline std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

/// Fixed-precision formatting for human-readable tables.
inline std::string format_fixed(double value, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, value);
  return std::string(buf);
}

/// Locale-independent double parse of a whole token.
inline double parse_double(std::string_view token, std::string_view what) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError("invalid number '" + std::string(token) + "' in " +
                     std::string(what));
  }
  return value;
}

}  // namespace opticenter

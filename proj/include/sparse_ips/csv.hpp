#pragma once

#include <charconv>
#include <ostream>
#include <string>

namespace sparse_ips {

/// Shortest round-trip decimal form; locale independent, so CSV output is
/// byte-stable across runs.
inline std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline void write_double(std::ostream& os, double x) { os << format_double(x); }

}  // namespace sparse_ips

#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <string>

#include "fssd/check.hpp"

namespace fssd {

// Shortest decimal form that parses back to the same bits, so every text
// file we write round-trips exactly.
inline std::string format_double(double v) {
  std::array<char, 64> buf;
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  FSSD_CHECK(ec == std::errc(), "cannot format number");
  return std::string(buf.data(), p);
}

inline double parse_double(const std::string& s, const char* what = "number") {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  FSSD_CHECK(ec == std::errc() && p == s.data() + s.size(), "bad ", what, " '", s, "'");
  return v;
}

inline std::uint64_t parse_u64(const std::string& s, const char* what = "integer") {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  FSSD_CHECK(ec == std::errc() && p == s.data() + s.size(), "bad ", what, " '", s, "'");
  return v;
}

inline std::int64_t parse_i64(const std::string& s, const char* what = "integer") {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  FSSD_CHECK(ec == std::errc() && p == s.data() + s.size(), "bad ", what, " '", s, "'");
  return v;
}

}  // namespace fssd

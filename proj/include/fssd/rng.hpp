#pragma once

#include <cstdint>

#include "fssd/check.hpp"

namespace fssd {

// splitmix64 (Steele, Lea, Flood 2014). One generator everywhere so that a
// seed means the same stream on every platform and compiler. Uniform doubles
// take the top 53 bits of the raw output.
struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    FSSD_CHECK(lo <= hi, "uniform bounds out of order: ", lo, " > ", hi);
    return lo + (hi - lo) * uniform01();
  }

  // integer in [lo, hi] inclusive
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    FSSD_CHECK(lo <= hi, "uniform_int bounds out of order: ", lo, " > ", hi);
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    std::uint64_t v = static_cast<std::uint64_t>(uniform01() * static_cast<double>(span));
    if (v >= span) v = span - 1;
    return lo + static_cast<std::int64_t>(v);
  }

  bool bernoulli(double p) { return uniform01() < p; }
};

// Mixes a stream id into a base seed. Used to derive independent per-sample
// and per-purpose streams from one run seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  Rng r(base ^ (0x632be59bd9b4e019ull + stream * 0x9e3779b97f4a7c15ull));
  r.next_u64();
  return r.next_u64();
}

}  // namespace fssd

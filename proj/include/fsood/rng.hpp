#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fsood {

/// Seedable generator whose output is identical on every conforming platform.
///
/// The engine is std::mt19937_64 seeded through std::seed_seq, both of which
/// the C++ standard specifies bit-exactly. The standard distributions are not
/// portable, so the draws below are spelled out:
///   uniform01     (next() >> 11) * 2^-53
///   uniform_index rejection sampling on the top of the 64-bit range
///   normal        Box-Muller, cosine branch only (no cached second value)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : Rng({seed}) {}
  /// Independent stream per key tuple, e.g. {seed, step, stream_tag}.
  Rng(std::initializer_list<std::uint64_t> key);

  std::uint64_t next() { return engine_(); }
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace fsood

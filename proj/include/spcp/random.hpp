#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace spcp {

/// PCG64 (XSL-RR 128/64) generator. Satisfies UniformRandomBitGenerator.
///
/// Uniform and normal variates are produced by the member functions below
/// rather than by <random> distributions, so that a given seed yields the
/// same stream on every standard library.
class Pcg64 {
 public:
  using result_type = std::uint64_t;

  explicit Pcg64(std::uint64_t seed, std::uint64_t stream = 0xda3e39cb94b95bdbULL);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();
  /// True with probability `prob`.
  bool bernoulli(double prob);

 private:
  void step();

  unsigned __int128 state_{0};
  unsigned __int128 inc_{0};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; used for all seed derivation.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a hash of a role name, used as the tag in derive_seed.
constexpr std::uint64_t role_tag(std::string_view role) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : role) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Sub-seed for one generator component: mix64(seed XOR tag).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed ^ tag);
}

/// Trial seed for experiment grids: hash of (base seed, cell index, trial index).
std::uint64_t trial_seed(std::uint64_t base_seed, std::uint64_t cell, std::uint64_t trial);

}  // namespace spcp

#include "spcp/random.hpp"

#include <cmath>
#include <numbers>

namespace spcp {

namespace {

constexpr unsigned __int128 kMultiplier =
    (static_cast<unsigned __int128>(0x2360ed051fc65da4ULL) << 64) | 0x4385df649fccf645ULL;

}  // namespace

Pcg64::Pcg64(std::uint64_t seed, std::uint64_t stream) {
  // Standard pcg_setseq_128 seeding, with both halves expanded by SplitMix64.
  const unsigned __int128 init_state =
      (static_cast<unsigned __int128>(mix64(seed)) << 64) | mix64(seed ^ 0x9e3779b97f4a7c15ULL);
  const unsigned __int128 init_seq =
      (static_cast<unsigned __int128>(mix64(stream)) << 64) | stream;
  state_ = 0;
  inc_ = (init_seq << 1) | 1u;
  step();
  state_ += init_state;
  step();
}

void Pcg64::step() { state_ = state_ * kMultiplier + inc_; }

Pcg64::result_type Pcg64::operator()() {
  step();
  const auto hi = static_cast<std::uint64_t>(state_ >> 64);
  const auto lo = static_cast<std::uint64_t>(state_);
  const unsigned rot = static_cast<unsigned>(state_ >> 122);
  const std::uint64_t x = hi ^ lo;
  return (x >> rot) | (x << ((64 - rot) & 63));
}

double Pcg64::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double Pcg64::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

bool Pcg64::bernoulli(double prob) { return uniform() < prob; }

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t trial_seed(std::uint64_t base_seed, std::uint64_t cell, std::uint64_t trial) {
  std::uint64_t h = mix64(base_seed);
  h = mix64(h ^ (cell + 0x632be59bd9b4e019ULL));
  h = mix64(h ^ (trial + 0x8cb92ba72f3d8dd7ULL));
  return h;
}

}  // namespace spcp

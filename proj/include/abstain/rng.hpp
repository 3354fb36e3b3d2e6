#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace abstain {

/// SplitMix64 finalizer. Used to derive child stream states and to
/// scramble user seeds so that nearby seeds give unrelated streams.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Deterministic 64-bit generator (xorshift64*).
///
/// Every random draw in the library goes through this type so that datasets,
/// initializations and splits are byte-reproducible on any platform:
///
///   state_0   = mix64(seed), replaced by 1 if zero
///   x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27
///   output    = x * 0x2545F4914F6CDD1D
///
/// uniform() takes the top 53 bits of the output and scales by 2^-53.
/// Child streams: child(id) seeds a new generator with
/// mix64(seed ^ mix64(id + 1)); the parent's own sequence is not consumed,
/// so adding a child never perturbs sibling streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(mix64(seed)) {
    if (state_ == 0) state_ = 1;
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next() noexcept {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }

  /// Uniform in [0, 1).
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t r = next();
    while (r >= limit) r = next();
    return r % n;
  }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  Rng child(std::uint64_t stream_id) const noexcept {
    return Rng(seed_ ^ mix64(stream_id + 1));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

/// Seed for an independent experiment cell, e.g. (base, rep, fold, d-index).
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(base);
  for (auto p : path) s = mix64(s ^ mix64(p + 0x632BE59BD9B4E019ULL));
  return s;
}

}  // namespace abstain

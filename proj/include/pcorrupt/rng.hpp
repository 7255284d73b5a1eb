#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace pcorrupt {

// Counter-based generator: output i of a stream is
//   splitmix64_finalize(seed + i * 0x9E3779B97F4A7C15),  i = 1, 2, ...
// so (seed, position) fully determines every subsequent draw and streams can
// be forked without shared state. Gaussians come from Box-Muller on pairs of
// uniforms; the second variate of each pair is cached.
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit CounterRng(std::uint64_t seed = 0) : seed_(seed) {}

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return mix(seed_ + counter_ * kGamma);
  }

  // Uniform in the open interval (0, 1), 53-bit resolution.
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound). Multiply-shift; bias is below 2^-64 * bound.
  std::uint64_t uniform_index(std::uint64_t bound) {
    const auto wide = static_cast<unsigned __int128>(next_u64()) * bound;
    return static_cast<std::uint64_t>(wide >> 64);
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // +1 or -1 with equal probability.
  double rademacher() { return (next_u64() >> 63) ? 1.0 : -1.0; }

  // Independent stream keyed by (seed, stream_id); does not advance *this.
  CounterRng split(std::uint64_t stream_id) const {
    return CounterRng(mix(seed_ ^ mix(stream_id + 0xD1B54A32D192ED03ULL)) + counter_);
  }

  template <class T>
  void fill_gaussian(std::span<T> out) {
    for (auto& x : out) x = static_cast<T>(gaussian());
  }

  // Fisher-Yates permutation of [0, n).
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(order[i - 1], order[j]);
    }
    return order;
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pcorrupt

#pragma once

#include <cmath>
#include <cstdint>

namespace stochlod {

// SplitMix64 finalizer. Used both as a seed hash and, applied to a running
// counter, as a stateless counter-based generator: output i of a stream is a
// pure function of (key, i), so realizations are reproducible independently
// of batch size or thread schedule.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// Derive an independent stream key from (seed, stream index).
constexpr std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(mix64(seed + kGolden) + (stream + 1) * kGolden);
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static std::uint64_t at(std::uint64_t key, std::uint64_t ctr) noexcept {
    return mix64(key + (ctr + 1) * kGolden);
  }

  std::uint64_t next_u64() noexcept { return at(key_, ctr_++); }

  // Uniform in the open interval (0,1).
  double uniform01() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; pairs are cached.
  double gaussian() noexcept {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace stochlod

#ifndef FLUIDSFORMER_RNG_HPP_
#define FLUIDSFORMER_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>

namespace fluidsformer {

/// SplitMix64 stream (Steele, Lea & Flood). The integer stream is the
/// portable contract: any implementation seeded identically yields the
/// same sequence of u64 values.
class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Independent child stream; advances this stream by one draw.
  SplitMix64 split() { return SplitMix64(next_u64()); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection-free multiply-shift; bias < 2^-32
  /// for the small n used here.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller (one value per call, second discarded).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t state() const { return state_; }

private:
  std::uint64_t state_;
};

/// Derives a stream seed from a base seed and an index without consuming
/// any shared stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  SplitMix64 g(base ^ (0xD1B54A32D192ED03ULL * (index + 1)));
  return g.next_u64();
}

} // namespace fluidsformer

#endif // FLUIDSFORMER_RNG_HPP_

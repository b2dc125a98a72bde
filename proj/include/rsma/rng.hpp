#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace rsma {

/// splitmix64 finalizer; used to derive substream seeds from a master seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic random source. All distributions are generated from raw
/// mt19937_64 output with explicit arithmetic so that a given seed produces
/// the same sequence on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Derives an independent substream from a master seed and a key path,
  /// e.g. Rng::substream(seed, {kChannelTag, snr_mdb, trial}).
  static Rng substream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = mix64(master);
    for (std::uint64_t p : path) s = mix64(s ^ p);
    return Rng(s);
  }

  std::uint64_t bits() { return eng_(); }

  /// Uniform on [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), rejection sampled (n >= 1).
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t bound = n == 0 ? 0 : UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = eng_();
    while (x >= bound) x = eng_();
    return x % n;
  }

  int bit() { return static_cast<int>(eng_() >> 63); }

  /// Standard normal via Box-Muller.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  /// Circularly-symmetric complex Gaussian CN(0,1): real/imag ~ N(0, 1/2).
  std::complex<double> cgaussian() {
    const double s = std::numbers::sqrt2 / 2.0;
    const double re = gaussian();
    const double im = gaussian();
    return {re * s, im * s};
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Substream tags for the simulator's derivation tree. Components draw from
/// independent streams so each stage can be re-run in isolation.
namespace stream_tag {
inline constexpr std::uint64_t kEstimate = 0x01;
inline constexpr std::uint64_t kSaaError = 0x02;
inline constexpr std::uint64_t kTrueChannel = 0x03;
inline constexpr std::uint64_t kNoise = 0x04;
inline constexpr std::uint64_t kData = 0x05;
inline constexpr std::uint64_t kInterleaver = 0x06;
}  // namespace stream_tag

}  // namespace rsma

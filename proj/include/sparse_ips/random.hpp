#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace sparse_ips {

/// Counter-based random substream.
///
/// A stream is identified by a key tuple (master seed, replica, entity, tag)
/// that is hashed into a 64-bit starting counter; outputs are the SplitMix64
/// finalizer applied to successive counters. Streams are cheap to create, so
/// every (replica, vertex) pair owns one and results never depend on how work
/// is scheduled across threads.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed, std::uint64_t replica = 0,
                  std::uint64_t entity = 0, std::uint64_t tag = 0) noexcept {
    std::uint64_t h = mix(seed ^ 0x6a09e667f3bcc909ULL);
    h = mix(h ^ (replica * 0xbb67ae8584caa73bULL + 1));
    h = mix(h ^ (entity * 0x3c6ef372fe94f82bULL + 2));
    h = mix(h ^ (tag * 0xa54ff53a5f1d36f1ULL + 3));
    counter_ = h;
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return mix(counter_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1].
  double uniform_open0() noexcept { return 1.0 - uniform(); }

  double exponential(double rate) noexcept {
    return -std::log(uniform_open0()) / rate;
  }

  /// Standard normal via the polar method; the spare value is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift; the bias is < n / 2^64 and irrelevant here.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stream tags so that different consumers of the same (replica, entity) key
/// never share random numbers.
namespace stream_tag {
inline constexpr std::uint64_t kInitial = 1;
inline constexpr std::uint64_t kDynamics = 2;
inline constexpr std::uint64_t kGraph = 3;
inline constexpr std::uint64_t kRoot = 4;
inline constexpr std::uint64_t kSampler = 5;
}  // namespace stream_tag

}  // namespace sparse_ips

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <utility>

namespace trendforest {

// 64-bit finalizer from SplitMix64; used both to seed the generator state
// and to derive child stream ids.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_stream(std::uint64_t stream, std::uint64_t child) noexcept {
  return splitmix64(stream ^ splitmix64(child + 0x632be59bd9b4e019ULL));
}

/// Reproducible random source identified by a (seed, stream_id) pair.
///
/// Two instances built from the same pair produce the same sequence on every
/// platform: the engine is xoshiro256** and all distributions below are
/// implemented here rather than taken from <random>, whose distributions are
/// implementation-defined. Parallel work never shares an instance; it calls
/// derive() with a distinct child id instead.
class SeededRng {
 public:
  using result_type = std::uint64_t;

  explicit SeededRng(std::uint64_t seed = 0, std::uint64_t stream_id = 0) noexcept
      : seed_(seed), stream_id_(stream_id) {
    std::uint64_t s = splitmix64(seed ^ 0x5851f42d4c957f2dULL) ^ splitmix64(stream_id);
    for (auto& word : state_) {
      s += 0x9e3779b97f4a7c15ULL;
      word = splitmix64(s);
    }
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  /// Child stream; independent of this instance's position in its sequence.
  SeededRng derive(std::uint64_t child) const noexcept {
    return SeededRng(seed_, mix_stream(stream_id_, child));
  }
  template <typename... Ids>
  SeededRng derive(std::uint64_t first, Ids... rest) const noexcept {
    if constexpr (sizeof...(rest) == 0) {
      return derive(first);
    } else {
      return derive(first).derive(static_cast<std::uint64_t>(rest)...);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound); bound must be positive. Lemire's method.
  std::uint64_t below(std::uint64_t bound) noexcept {
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal draw (Marsaglia polar method).
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0, v = 0.0, s = 0.0;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
  }

  template <typename T>
  void shuffle(std::span<T> values) noexcept {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace trendforest

#pragma once

#include <cstdint>
#include <limits>

namespace moneyflow {

namespace detail {
__extension__ using uint128 = unsigned __int128;
}

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds a domain tag and up to two coordinates into one substream selector.
constexpr std::uint64_t derive_stream_id(std::uint64_t domain, std::uint64_t a,
                                         std::uint64_t b = 0) noexcept {
  return mix64(mix64(domain ^ mix64(a)) ^ b);
}

/**
 * A seedable xoshiro256** generator addressed by (seed, stream_id).
 *
 * Identical (seed, stream_id) pairs give identical sequences on every
 * platform: state expansion and stepping use only 64-bit integer arithmetic.
 * Distinct stream ids give statistically independent substreams, so parallel
 * work derives one stream per unit of work instead of sharing a generator.
 *
 * Satisfies UniformRandomBitGenerator.
 */
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
      : seed_(seed), stream_id_(stream_id) {
    std::uint64_t x = seed ^ mix64(stream_id ^ 0x6a09e667f3bcc908ULL);
    for (auto& word : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      word = mix64(x);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next(); }

  result_type next() noexcept {
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

  /// Uniform on [0, 1) with 53 bits of resolution. Consumes one draw.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Unbiased uniform integer on [0, bound). Consumes one draw, rarely more.
  std::uint64_t below(std::uint64_t bound) noexcept {
    // Lemire's nearly-divisionless method.
    detail::uint128 m = static_cast<detail::uint128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<detail::uint128>(next()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t state_[4];
};

}  // namespace moneyflow

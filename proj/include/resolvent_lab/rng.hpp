#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace resolvent_lab {

/// Counter-based random stream (Philox4x32-10).
///
/// A stream is fully determined by (seed, stream_id): the seed is the
/// Philox key and the stream id occupies the upper half of the counter.
/// Two streams with equal identifiers produce identical draws no matter
/// which worker owns them or in which order trajectories are scheduled.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        stream_{static_cast<std::uint32_t>(stream_id),
                static_cast<std::uint32_t>(stream_id >> 32)} {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    if (cursor_ == 2) {
      refill();
    }
    const auto lo = static_cast<std::uint64_t>(block_[2 * cursor_]);
    const auto hi = static_cast<std::uint64_t>(block_[2 * cursor_ + 1]);
    ++cursor_;
    return lo | (hi << 32);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Mean-one exponential.
  double exponential() noexcept { return -std::log(uniform_open()); }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// +1 or -1 with equal probability.
  double sign() noexcept { return ((*this)() >> 63) != 0U ? -1.0 : 1.0; }

  std::uint64_t blocks_consumed() const noexcept { return counter_; }

  /// Raw Philox4x32-10 block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> ctr,
                                             std::array<std::uint32_t, 2> key) noexcept {
    constexpr std::uint32_t kM0 = 0xD2511F53U;
    constexpr std::uint32_t kM1 = 0xCD9E8D57U;
    constexpr std::uint32_t kW0 = 0x9E3779B9U;
    constexpr std::uint32_t kW1 = 0xBB67AE85U;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t prod0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t prod1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(prod0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(prod0);
      const auto hi1 = static_cast<std::uint32_t>(prod1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(prod1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }

 private:
  void refill() noexcept {
    block_ = philox({static_cast<std::uint32_t>(counter_),
                     static_cast<std::uint32_t>(counter_ >> 32), stream_[0], stream_[1]},
                    key_);
    ++counter_;
    cursor_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 2> stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int cursor_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace resolvent_lab

#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace xsrank::nk {

/// Counter-based random stream.
///
/// Every draw is a pure function of (key, counter): the n-th output is the
/// SplitMix64 finalizer applied to key + n * golden-ratio increment. Streams
/// are split by hashing a child id into a fresh key, so call sites can hand
/// disjoint streams to concurrent work without sharing state.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept : key_(mix(seed ^ kSeedSalt)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next_u64(); }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix(key_ + counter_ * kGamma);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal() noexcept;

  /// Uniform index in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Child stream identified by an integer; independent of the parent's counter.
  [[nodiscard]] Rng split(std::uint64_t stream_id) const noexcept;

  /// Child stream identified by a name.
  [[nodiscard]] Rng split(std::string_view name) const noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  struct FromKey {};
  Rng(FromKey, std::uint64_t key) noexcept : key_(key) {}

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kSeedSalt = 0x5851F42D4C957F2DULL;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace xsrank::nk

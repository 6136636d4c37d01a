#pragma once

#include <array>
#include <cstdint>

namespace dsgd {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
/// easy as 1, 2, 3"). Maps a 128-bit counter and 64-bit key to 128 bits.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

/// Counter-based random stream addressed by (key, stream index). Every draw
/// is a pure function of (key, index, draw counter), so any stream can be
/// reconstructed from its address without stored state.
class RandomStream {
 public:
  RandomStream(std::uint64_t key, std::uint64_t index) noexcept
      : key_(key), index_(index) {}

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t index() const noexcept { return index_; }
  /// Number of 64-bit words consumed so far.
  std::uint64_t position() const noexcept { return counter_ * 2 + (has_spare_ ? 1 : 0); }

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  /// Uniform on (0, 1]; safe to take logs of.
  double uniform_open_low() noexcept;
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). Requires n > 0. Uses rejection, so unbiased.
  std::uint64_t below(std::uint64_t n) noexcept;

  double normal() noexcept;
  double cauchy() noexcept;
  /// Laplace(0, 1): density exp(-|x|)/2.
  double laplace() noexcept;
  /// +1 or -1 with equal probability.
  double sign() noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  std::uint64_t key_;
  std::uint64_t index_;
  std::uint64_t counter_ = 0;
  std::uint64_t spare_ = 0;
  bool has_spare_ = false;
};

/// Returns the stream for block `block_index` under `base_seed`.
inline RandomStream derive_stream(std::uint64_t base_seed, std::uint64_t block_index) noexcept {
  return RandomStream(base_seed, block_index);
}

/// SplitMix64 finalizer; used to derive independent keys for separate
/// randomness domains (feature draws, data sampling, splits).
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Key for a named randomness domain under a base seed. Domain 0 is reserved
/// for feature blocks and returns the base seed unchanged.
std::uint64_t domain_key(std::uint64_t base_seed, std::uint64_t domain) noexcept;

namespace domains {
inline constexpr std::uint64_t kFeatures = 0;
inline constexpr std::uint64_t kDataSampling = 0x64617461;  // "data"
inline constexpr std::uint64_t kSplit = 0x73706c74;         // "splt"
inline constexpr std::uint64_t kSynth = 0x73796e74;         // "synt"
inline constexpr std::uint64_t kPairs = 0x70616972;         // "pair"
inline constexpr std::uint64_t kPrimed = 0x70726d64;        // "prmd"
}  // namespace domains

}  // namespace dsgd

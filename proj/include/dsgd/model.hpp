#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dsgd/kernel.hpp"
#include "dsgd/loss.hpp"

namespace dsgd {

/// A trained doubly stochastic predictor. Feature block s (0-based storage)
/// is regenerated from (base_seed, s + 1); its effective coefficients are
/// `scale * block(s)`.
struct Model {
  KernelSpec kernel;
  LossSpec loss;
  std::size_t dim = 0;
  /// Scores per input: 1, the class count, or the target count for
  /// multi-target regression.
  std::size_t outputs = 1;
  std::uint64_t base_seed = 0;
  double theta = 1.0;
  double nu = 1.0;
  std::size_t block_size = 1;
  std::uint64_t iterations = 0;
  double scale = 1.0;
  /// iterations x outputs x block_size, block-major; each block is an
  /// outputs x block_size row-major matrix.
  std::vector<double> coefficients;
  /// Same layout; effective coefficients of the averaged iterate (no scale).
  std::vector<double> averaged;
  std::optional<double> tau;
  /// True when `averaged` is maintained (it is empty while iterations == 0).
  bool averaging_enabled = false;

  std::size_t block_stride() const noexcept { return outputs * block_size; }
  std::span<const double> block(std::size_t s) const {
    return {coefficients.data() + s * block_stride(), block_stride()};
  }
  std::span<const double> averaged_block(std::size_t s) const {
    return {averaged.data() + s * block_stride(), block_stride()};
  }
  bool has_averaging() const noexcept { return averaging_enabled; }
  /// Numbers held in coefficient storage (excludes the averaged copy).
  std::size_t coefficient_count() const noexcept { return coefficients.size(); }

  /// Effective coefficients of all blocks, scale folded in.
  std::vector<double> effective_coefficients() const;

  friend bool operator==(const Model&, const Model&) = default;
};

}  // namespace dsgd

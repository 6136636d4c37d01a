#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dsgd/kernel.hpp"
#include "dsgd/random_stream.hpp"

namespace dsgd {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One TensorSketch: `degree` independent count sketches of width `width`
/// over inputs of length `input_dim` (the data dimension plus the folded bias
/// coordinate).
struct SketchTable {
  std::uint32_t width = 0;
  std::uint32_t degree = 0;
  std::size_t input_dim = 0;
  /// degree x input_dim bucket indices in [0, width).
  std::vector<std::uint32_t> buckets;
  /// degree x input_dim signs in {-1, +1}.
  std::vector<double> signs;

  bool operator==(const SketchTable&) const = default;
};

/// Parameters of one block of r random features. Never persisted: it is
/// regenerated from (base seed, block index) whenever it is needed.
struct FeatureBlock {
  std::uint64_t block_index = 0;
  KernelFamily family = KernelFamily::gaussian;
  std::size_t r = 0;
  std::size_t d = 0;
  /// r x d; gaussian, laplacian, cauchy, arc_cosine.
  RowMatrix frequencies;
  /// r phases in [0, 2 pi); shift-invariant families.
  Eigen::VectorXd offsets;
  /// r x d entries in {-1, +1}; hellinger.
  RowMatrix sign_rows;
  /// ceil(r / sketch_dim) sketches; polynomial_sketch.
  std::vector<SketchTable> sketches;

  bool operator==(const FeatureBlock&) const = default;
};

/// Draws the parameters of block `block_index`. Features are drawn one at a
/// time, so the first r' features of a block of size r >= r' coincide with
/// the block of size r'. The linear family is deterministic and requires
/// r == d.
FeatureBlock sample_block(const KernelSpec& spec, std::size_t d, std::size_t r,
                          std::uint64_t base_seed, std::uint64_t block_index);

/// Evaluates the block at each row of X. Output is rows(X) x r, scaled so
/// that features(x) . features(x') is an unbiased estimate of k(x, x').
RowMatrix featurize(const FeatureBlock& block, const KernelSpec& spec,
                    const Eigen::Ref<const RowMatrix>& X);

/// Same as featurize, writing into a preallocated rows(X) x r buffer.
void featurize_into(const FeatureBlock& block, const KernelSpec& spec,
                    const Eigen::Ref<const RowMatrix>& X, Eigen::Ref<RowMatrix> out);

/// Raw TensorSketch of x (length sketch_dim) from sketch `sketch_index` of
/// the block. Inner products of two sketches are unbiased for
/// (<x, x'> + c)^p.
std::vector<double> tensor_sketch(std::span<const double> x, const KernelSpec& spec,
                                  const FeatureBlock& block, std::size_t sketch_index = 0);

/// Median Euclidean distance over up to `pair_budget` distinct pairs of rows.
/// When all pairs fit in the budget every pair is used; otherwise pairs are
/// drawn uniformly from `stream`.
double median_heuristic(const Eigen::Ref<const RowMatrix>& X, std::size_t pair_budget,
                        RandomStream& stream);

}  // namespace dsgd

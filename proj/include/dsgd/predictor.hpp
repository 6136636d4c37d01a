#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "dsgd/features.hpp"
#include "dsgd/model.hpp"

namespace dsgd {

namespace detail {

// out[k] += sum_j phi[j] * coef[k * r + j], each sum formed left to right
// from zero. Every evaluation path goes through this so cached and
// regenerated scores agree bit for bit. `scratch` holds 2 * outputs doubles;
// the transposed copy lets the k loop vectorize without reordering any sum.
inline void transpose_block(const double* coef, std::size_t r, std::size_t outputs,
                            double* coef_t) noexcept {
  for (std::size_t k = 0; k < outputs; ++k)
    for (std::size_t j = 0; j < r; ++j) coef_t[j * outputs + k] = coef[k * r + j];
}

inline void add_scores(const double* phi, const double* coef, const double* coef_t, std::size_t r,
                       std::size_t outputs, double* out, double* scratch) noexcept {
  if (outputs == 1) {
    double s = 0.0;
    for (std::size_t j = 0; j < r; ++j) s += phi[j] * coef[j];
    out[0] += s;
    return;
  }
  for (std::size_t k = 0; k < outputs; ++k) scratch[k] = 0.0;
  for (std::size_t j = 0; j < r; ++j) {
    const double p = phi[j];
    const double* c = coef_t + j * outputs;
    for (std::size_t k = 0; k < outputs; ++k) scratch[k] += p * c[k];
  }
  for (std::size_t k = 0; k < outputs; ++k) out[k] += scratch[k];
}

}  // namespace detail

/// In-memory memo of regenerated feature blocks. Purely a speed-up: a
/// prediction with or without the cache is bit-identical.
class BlockCache {
 public:
  const FeatureBlock& get(const KernelSpec& kernel, std::size_t dim, std::size_t block_size,
                          std::uint64_t base_seed, std::uint64_t block_index);
  void clear() noexcept;
  std::size_t size() const noexcept { return filled_; }

 private:
  KernelSpec kernel_;
  std::size_t dim_ = 0;
  std::size_t block_size_ = 0;
  std::uint64_t base_seed_ = 0;
  bool keyed_ = false;
  std::size_t filled_ = 0;
  std::vector<std::optional<FeatureBlock>> blocks_;
};

/// Adds sum_s coef_s . features_s(x) for blocks s = 0..n_blocks-1 to `out`
/// (rows(X) x outputs), block by block in ascending order. `coefficients`
/// uses the Model layout. No scale is applied.
void accumulate_block_scores(const KernelSpec& kernel, std::size_t dim, std::size_t block_size,
                             std::size_t outputs, std::uint64_t base_seed,
                             std::span<const double> coefficients, std::size_t n_blocks,
                             const Eigen::Ref<const RowMatrix>& X, Eigen::Ref<RowMatrix> out,
                             BlockCache* cache = nullptr);

/// f(x) for each row of X: rows(X) x model.outputs scores.
RowMatrix predict(const Model& model, const Eigen::Ref<const RowMatrix>& X,
                  BlockCache* cache = nullptr);

/// Averaged iterate (1/t) sum_i f_i(x). Requires a model trained with
/// averaging on.
RowMatrix predict_averaged(const Model& model, const Eigen::Ref<const RowMatrix>& X,
                           BlockCache* cache = nullptr);

/// Binary model file: magic, version, endianness tag, kernel and loss specs,
/// scalars, little-endian float64 coefficient blocks, CRC-32 trailer.
void save_model(const Model& model, std::ostream& out);
Model load_model(std::istream& in);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

/// CSV "row,score" (or "row,score_0,...,score_{C-1}") with round-trip
/// formatting.
void write_predictions_csv(const RowMatrix& scores, std::ostream& out);

}  // namespace dsgd

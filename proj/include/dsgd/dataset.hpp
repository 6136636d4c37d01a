#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dsgd/features.hpp"

namespace dsgd {

enum class Task : std::uint8_t { regression, binary, multiclass, density_ratio, unlabeled };

/// Largest input dimension accepted by the parsers (inputs are densified).
inline constexpr std::size_t kMaxDimension = 100000;

/// Dense rows with one target per row. Targets are real values, +-1 labels,
/// class indices 0..C-1 or density-ratio selectors depending on the task.
struct Dataset {
  RowMatrix X;
  std::vector<double> y;
  Task task = Task::regression;
  std::uint32_t num_classes = 0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(X.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(X.cols()); }
  std::span<const double> row(std::size_t i) const {
    return {X.row(static_cast<Eigen::Index>(i)).data(), dim()};
  }

  /// Throws DataError if rows and targets disagree, an entry is non-finite,
  /// or a class index is out of range.
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

enum class DataFormat { libsvm, csv };
DataFormat parse_data_format(std::string_view name);

/// Parses "label idx:val idx:val ..." lines with 1-based, strictly ascending
/// indices. The dimension is the largest index seen (at least `min_dim`).
/// Blank lines and lines starting with '#' are skipped.
Dataset parse_libsvm(std::istream& in, std::size_t min_dim = 0);
/// Parses CSV with header "y,x1,...,xd".
Dataset parse_csv(std::istream& in);

/// Writers use shortest round-trip decimal formatting, so parsing the output
/// reproduces every value exactly.
void write_libsvm(const Dataset& data, std::ostream& out);
void write_csv(const Dataset& data, std::ostream& out);

Dataset load_dataset(const std::filesystem::path& path, DataFormat format);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

/// Noiseless regression surface cos(0.5 pi |x|) exp(-0.1 pi |x|).
double synth_regression_target(std::span<const double> x);

/// n points uniform on [-5, 5]^2 with targets synth_regression_target(x) plus
/// 0.1 N(0, 1) noise (omitted when `noiseless`).
Dataset synth_regression(std::size_t n, std::uint64_t seed, bool noiseless = false);

/// Seeded random partition into (train, holdout) with round(n * fraction)
/// holdout rows. Row order within each part follows the permutation.
std::pair<Dataset, Dataset> split(const Dataset& data, double holdout_fraction,
                                  std::uint64_t seed);

}  // namespace dsgd

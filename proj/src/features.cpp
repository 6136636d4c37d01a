#include "dsgd/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dsgd/error.hpp"

namespace dsgd {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t sketch_count(std::size_t r, std::uint32_t width) { return (r + width - 1) / width; }

void sketch_into(std::span<const double> x, double bias, const SketchTable& table,
                 std::vector<double>& out, std::vector<double>& scratch) {
  const std::uint32_t width = table.width;
  const std::size_t n_in = table.input_dim;
  const double folded = std::sqrt(bias);
  auto coord = [&](std::size_t i) { return i < x.size() ? x[i] : folded; };

  out.assign(width, 0.0);
  for (std::size_t i = 0; i < n_in; ++i) out[table.buckets[i]] += table.signs[i] * coord(i);

  for (std::uint32_t k = 1; k < table.degree; ++k) {
    const std::uint32_t* buckets = table.buckets.data() + k * n_in;
    const double* signs = table.signs.data() + k * n_in;
    scratch.assign(width, 0.0);
    for (std::uint32_t a = 0; a < width; ++a) {
      const double va = out[a];
      if (va == 0.0) continue;
      for (std::size_t i = 0; i < n_in; ++i) {
        const double vb = signs[i] * coord(i);
        if (vb == 0.0) continue;
        std::uint32_t idx = a + buckets[i];
        if (idx >= width) idx -= width;
        scratch[idx] += va * vb;
      }
    }
    out.swap(scratch);
  }
}

void check_input_dim(const FeatureBlock& block, Eigen::Index cols) {
  if (static_cast<std::size_t>(cols) != block.d) {
    throw InvalidArgument("featurize: input has " + std::to_string(cols) +
                          " columns but the feature block expects " + std::to_string(block.d));
  }
}

}  // namespace

FeatureBlock sample_block(const KernelSpec& spec, std::size_t d, std::size_t r,
                          std::uint64_t base_seed, std::uint64_t block_index) {
  spec.validate();
  if (r < 1 || d < 1) throw InvalidArgument("sample_block: requires r >= 1 and d >= 1");

  FeatureBlock block;
  block.block_index = block_index;
  block.family = spec.family;
  block.r = r;
  block.d = d;
  RandomStream stream = derive_stream(base_seed, block_index);

  switch (spec.family) {
    case KernelFamily::gaussian:
    case KernelFamily::laplacian:
    case KernelFamily::cauchy: {
      block.frequencies.resize(r, d);
      block.offsets.resize(r);
      for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t i = 0; i < d; ++i) {
          double w;
          if (spec.family == KernelFamily::gaussian) {
            w = stream.normal();
          } else if (spec.family == KernelFamily::laplacian) {
            w = stream.cauchy();
          } else {
            w = stream.laplace();
          }
          block.frequencies(j, i) = w;
        }
        block.offsets[j] = kTwoPi * stream.uniform();
      }
      break;
    }
    case KernelFamily::arc_cosine: {
      block.frequencies.resize(r, d);
      for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t i = 0; i < d; ++i) block.frequencies(j, i) = stream.normal();
      }
      break;
    }
    case KernelFamily::hellinger: {
      block.sign_rows.resize(r, d);
      for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t i = 0; i < d; ++i) block.sign_rows(j, i) = stream.sign();
      }
      break;
    }
    case KernelFamily::polynomial_sketch: {
      const std::size_t n_in = d + 1;
      const std::size_t count = sketch_count(r, spec.sketch_dim);
      block.sketches.resize(count);
      for (auto& table : block.sketches) {
        table.width = spec.sketch_dim;
        table.degree = spec.degree;
        table.input_dim = n_in;
        table.buckets.resize(spec.degree * n_in);
        table.signs.resize(spec.degree * n_in);
        for (std::size_t k = 0; k < table.buckets.size(); ++k) {
          table.buckets[k] = static_cast<std::uint32_t>(stream.below(spec.sketch_dim));
          table.signs[k] = stream.sign();
        }
      }
      break;
    }
    case KernelFamily::linear: {
      if (r != d) {
        throw InvalidArgument("linear feature map requires block size r == d (got r=" +
                              std::to_string(r) + ", d=" + std::to_string(d) + ")");
      }
      break;
    }
  }
  return block;
}

void featurize_into(const FeatureBlock& block, const KernelSpec& spec,
                    const Eigen::Ref<const RowMatrix>& X, Eigen::Ref<RowMatrix> out) {
  check_input_dim(block, X.cols());
  if (block.family != spec.family) {
    throw InvalidArgument("featurize: block was sampled for a different kernel family");
  }
  const Eigen::Index n = X.rows();
  const std::size_t r = block.r;
  const std::size_t d = block.d;
  if (out.rows() != n || static_cast<std::size_t>(out.cols()) != r) {
    throw InvalidArgument("featurize: output buffer has the wrong shape");
  }

  switch (block.family) {
    case KernelFamily::gaussian:
    case KernelFamily::laplacian:
    case KernelFamily::cauchy: {
      const double inv_bw = 1.0 / spec.bandwidth;
      const double norm = std::sqrt(2.0 / static_cast<double>(r));
      std::vector<double> scaled(d);
      for (Eigen::Index row = 0; row < n; ++row) {
        for (std::size_t i = 0; i < d; ++i) scaled[i] = X(row, i) * inv_bw;
        double* dst = out.row(row).data();
        for (std::size_t j = 0; j < r; ++j) {
          const double* w = block.frequencies.row(j).data();
          double proj = 0.0;
          for (std::size_t i = 0; i < d; ++i) proj += w[i] * scaled[i];
          dst[j] = norm * std::cos(proj + block.offsets[j]);
        }
      }
      break;
    }
    case KernelFamily::arc_cosine: {
      const double norm = std::sqrt(2.0 / static_cast<double>(r));
      for (Eigen::Index row = 0; row < n; ++row) {
        double* dst = out.row(row).data();
        for (std::size_t j = 0; j < r; ++j) {
          const double* w = block.frequencies.row(j).data();
          double proj = 0.0;
          for (std::size_t i = 0; i < d; ++i) proj += w[i] * X(row, i);
          if (proj > 0.0) {
            dst[j] = spec.order == 0 ? norm : norm * proj;
          } else {
            dst[j] = 0.0;
          }
        }
      }
      break;
    }
    case KernelFamily::hellinger: {
      const double norm = 1.0 / std::sqrt(static_cast<double>(r));
      std::vector<double> root(d);
      for (Eigen::Index row = 0; row < n; ++row) {
        for (std::size_t i = 0; i < d; ++i) {
          const double v = X(row, i);
          if (v < 0.0) throw InvalidArgument("hellinger features require nonnegative inputs");
          root[i] = std::sqrt(v);
        }
        double* dst = out.row(row).data();
        for (std::size_t j = 0; j < r; ++j) {
          const double* s = block.sign_rows.row(j).data();
          double proj = 0.0;
          for (std::size_t i = 0; i < d; ++i) proj += s[i] * root[i];
          dst[j] = norm * proj;
        }
      }
      break;
    }
    case KernelFamily::polynomial_sketch: {
      const std::uint32_t width = spec.sketch_dim;
      const double norm = std::sqrt(static_cast<double>(width) / static_cast<double>(r));
      std::vector<double> x(d), sk, scratch;
      for (Eigen::Index row = 0; row < n; ++row) {
        for (std::size_t i = 0; i < d; ++i) x[i] = X(row, i);
        double* dst = out.row(row).data();
        for (std::size_t s = 0; s < block.sketches.size(); ++s) {
          sketch_into(x, spec.bias, block.sketches[s], sk, scratch);
          const std::size_t begin = s * width;
          const std::size_t end = std::min(r, begin + width);
          for (std::size_t j = begin; j < end; ++j) dst[j] = norm * sk[j - begin];
        }
      }
      break;
    }
    case KernelFamily::linear: {
      out = X;
      break;
    }
  }
}

RowMatrix featurize(const FeatureBlock& block, const KernelSpec& spec,
                    const Eigen::Ref<const RowMatrix>& X) {
  check_input_dim(block, X.cols());
  RowMatrix out(X.rows(), static_cast<Eigen::Index>(block.r));
  featurize_into(block, spec, X, out);
  return out;
}

std::vector<double> tensor_sketch(std::span<const double> x, const KernelSpec& spec,
                                  const FeatureBlock& block, std::size_t sketch_index) {
  if (spec.family != KernelFamily::polynomial_sketch ||
      block.family != KernelFamily::polynomial_sketch) {
    throw InvalidArgument("tensor_sketch requires the polynomial_sketch family");
  }
  if (x.size() != block.d) {
    throw InvalidArgument("tensor_sketch: input has dimension " + std::to_string(x.size()) +
                          " but the block expects " + std::to_string(block.d));
  }
  if (sketch_index >= block.sketches.size()) {
    throw InvalidArgument("tensor_sketch: sketch index out of range");
  }
  std::vector<double> out, scratch;
  sketch_into(x, spec.bias, block.sketches[sketch_index], out, scratch);
  return out;
}

double median_heuristic(const Eigen::Ref<const RowMatrix>& X, std::size_t pair_budget,
                        RandomStream& stream) {
  const std::size_t n = static_cast<std::size_t>(X.rows());
  if (n < 2) throw InvalidArgument("median_heuristic: needs at least 2 points");
  if (pair_budget < 1) throw InvalidArgument("median_heuristic: pair budget must be positive");

  std::vector<double> dist;
  const std::size_t total_pairs = n * (n - 1) / 2;
  if (total_pairs <= pair_budget) {
    dist.reserve(total_pairs);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) dist.push_back((X.row(i) - X.row(j)).norm());
    }
  } else {
    dist.reserve(pair_budget);
    for (std::size_t k = 0; k < pair_budget; ++k) {
      const std::size_t i = stream.below(n);
      std::size_t j = stream.below(n - 1);
      if (j >= i) ++j;
      dist.push_back((X.row(i) - X.row(j)).norm());
    }
  }

  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + mid, dist.end());
  const double upper = dist[mid];
  if (dist.size() % 2 == 1) return upper;
  const double lower = *std::max_element(dist.begin(), dist.begin() + mid);
  return 0.5 * (lower + upper);
}

}  // namespace dsgd

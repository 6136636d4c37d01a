#pragma once

#include <cstdint>
#include <functional>

#include "dsgd/dataset.hpp"
#include "dsgd/features.hpp"
#include "dsgd/random_stream.hpp"

namespace testing {

// Runs `body` on `cases` independent generator streams.
inline void for_all(std::size_t cases, std::uint64_t seed,
                    const std::function<void(dsgd::RandomStream&)>& body) {
  for (std::size_t c = 0; c < cases; ++c) {
    dsgd::RandomStream gen(seed ^ 0x7e57, c);
    body(gen);
  }
}

inline dsgd::RowMatrix random_matrix(dsgd::RandomStream& g, Eigen::Index rows, Eigen::Index cols,
                                     double lo = -1.0, double hi = 1.0) {
  dsgd::RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g.uniform(lo, hi);
  return m;
}

inline dsgd::Dataset random_regression(dsgd::RandomStream& g, std::size_t n, std::size_t d) {
  dsgd::Dataset data;
  data.X = random_matrix(g, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  data.y.resize(n);
  for (auto& v : data.y) v = g.uniform(-1.0, 1.0);
  return data;
}

inline dsgd::Dataset random_binary(dsgd::RandomStream& g, std::size_t n, std::size_t d) {
  dsgd::Dataset data = random_regression(g, n, d);
  for (std::size_t i = 0; i < n; ++i) data.y[i] = data.X(static_cast<Eigen::Index>(i), 0) >= 0 ? 1.0 : -1.0;
  data.task = dsgd::Task::binary;
  return data;
}

}  // namespace testing

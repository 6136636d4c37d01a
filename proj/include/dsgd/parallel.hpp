#pragma once

#include <cstddef>
#include <functional>

namespace dsgd {

/// Upper bound on worker threads used inside library calls. Defaults to the
/// DSGD_THREADS environment variable, else 1.
std::size_t max_threads() noexcept;
void set_max_threads(std::size_t n) noexcept;

/// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each,
/// using up to max_threads() threads. Chunks are disjoint, so any per-index
/// computation gives the same result for every thread count.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace dsgd

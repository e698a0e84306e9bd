#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace msra::parallel {

/// Number of worker threads used by block-parallel loops. Defaults to the
/// MSRA_THREADS environment variable, else the hardware concurrency.
std::size_t thread_count();
void set_thread_count(std::size_t threads);

/// Runs body(b) for every b in [0, blocks). Blocks are independent; the
/// assignment of blocks to threads never influences results. Calls made from
/// inside a worker run serially. The first exception thrown by body is
/// rethrown after all workers stop.
void for_blocks(std::size_t blocks, const std::function<void(std::size_t)>& body);

/// Rows per reduction block. Fixed so that reductions are bit-identical for
/// every thread count.
inline constexpr std::size_t kBlockRows = 4096;

/// Sums `width`-wide partial vectors over the rows [0, rows) in fixed blocks,
/// then combines the block partials with a pairwise tree in block order.
/// body(begin, end, acc) must add the contribution of rows [begin, end) into acc.
std::vector<double> block_sum(
    std::size_t rows, std::size_t width,
    const std::function<void(std::size_t, std::size_t, std::span<double>)>& body);

}  // namespace msra::parallel

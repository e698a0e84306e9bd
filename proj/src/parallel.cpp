#include "msra/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace msra::parallel {
namespace {

std::size_t default_threads() {
  if (const char* env = std::getenv("MSRA_THREADS")) {
    try {
      const long value = std::stol(env);
      if (value > 0) return static_cast<std::size_t>(value);
    } catch (...) {
      // fall through to hardware concurrency
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

thread_local bool inside_worker = false;

std::atomic<std::size_t>& configured_threads() {
  static std::atomic<std::size_t> threads{default_threads()};
  return threads;
}

void tree_reduce(std::vector<double>& partials, std::size_t blocks, std::size_t width) {
  for (std::size_t stride = 1; stride < blocks; stride *= 2) {
    for (std::size_t b = 0; b + stride < blocks; b += 2 * stride) {
      double* dst = partials.data() + b * width;
      const double* src = partials.data() + (b + stride) * width;
      for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
    }
  }
}

}  // namespace

std::size_t thread_count() { return configured_threads().load(); }

void set_thread_count(std::size_t threads) { configured_threads().store(std::max<std::size_t>(1, threads)); }

void for_blocks(std::size_t blocks, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = inside_worker ? 1 : std::min(thread_count(), blocks);
  if (workers <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) body(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    const bool was_inside = inside_worker;
    inside_worker = true;
    try {
      for (std::size_t b = next.fetch_add(1); b < blocks; b = next.fetch_add(1)) body(b);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next.store(blocks);
    }
    inside_worker = was_inside;
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(run);
    run();
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<double> block_sum(
    std::size_t rows, std::size_t width,
    const std::function<void(std::size_t, std::size_t, std::span<double>)>& body) {
  const std::size_t blocks = std::max<std::size_t>(1, (rows + kBlockRows - 1) / kBlockRows);
  std::vector<double> partials(blocks * width, 0.0);
  for_blocks(blocks, [&](std::size_t b) {
    const std::size_t begin = b * kBlockRows;
    const std::size_t end = std::min(rows, begin + kBlockRows);
    body(begin, end, std::span<double>(partials.data() + b * width, width));
  });
  tree_reduce(partials, blocks, width);
  partials.resize(width);
  return partials;
}

}  // namespace msra::parallel

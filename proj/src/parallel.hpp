#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace robmrag::detail {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each.
// Chunk boundaries depend only on n and the thread count; callers must make
// their results independent of both.
template <typename Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(resolve_threads(threads)), n);
    if (workers <= 1) {
        if (n > 0) fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    const std::size_t step = (n + workers - 1) / workers;
    for (std::size_t begin = 0; begin < n; begin += step) {
        const std::size_t end = std::min(n, begin + step);
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
}

}  // namespace robmrag::detail

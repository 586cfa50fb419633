#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace mvor {

/// Runs fn(begin, end) over contiguous chunks of [0, n), one thread per chunk.
/// threads <= 1 runs inline. Chunk boundaries depend only on n and the thread
/// count, and callers keep all cross-chunk reductions in index order, so
/// results never depend on scheduling. Workers must not throw.
inline void parallel_chunks(std::size_t n, int threads,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
    if (threads <= 1 || n < 2) {
        fn(0, n);
        return;
    }
    std::size_t t = std::min<std::size_t>(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(t);
    std::size_t base = n / t, rem = n % t, begin = 0;
    for (std::size_t i = 0; i < t; ++i) {
        std::size_t len = base + (i < rem ? 1 : 0);
        pool.emplace_back(fn, begin, begin + len);
        begin += len;
    }
    for (auto& th : pool) th.join();
}

} // namespace mvor

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace occfield {

// Deterministic chunked parallel-for: the work is split into fixed chunks
// (independent of worker count); workers pull chunks from a shared counter.
// Callers needing deterministic reductions accumulate per chunk and merge
// the chunk results in chunk order afterwards.
inline constexpr size_t kParallelChunks = 16;

inline void parallel_chunks(size_t n, int workers,
                            const std::function<void(size_t chunk, size_t begin,
                                                     size_t end)>& fn) {
    if (n == 0) return;
    size_t nchunks = std::min(kParallelChunks, n);
    auto chunk_range = [&](size_t c) {
        size_t begin = c * n / nchunks;
        size_t end = (c + 1) * n / nchunks;
        return std::pair<size_t, size_t>(begin, end);
    };
    if (workers <= 1) {
        for (size_t c = 0; c < nchunks; ++c) {
            auto [b, e] = chunk_range(c);
            fn(c, b, e);
        }
        return;
    }
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            size_t c = next.fetch_add(1);
            if (c >= nchunks) return;
            auto [b, e] = chunk_range(c);
            fn(c, b, e);
        }
    };
    std::vector<std::thread> pool;
    int nthreads = std::min<int>(workers, static_cast<int>(nchunks));
    pool.reserve(nthreads);
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

inline int default_workers() {
    if (const char* env = std::getenv("OCCRENDER_WORKERS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    return 1;
}

}  // namespace occfield

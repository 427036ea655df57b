#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace vipnet {

/// Splits [0, n) into at most `threads` fixed contiguous chunks and runs
/// `fn(begin, end)` on each. Chunking depends only on (n, threads), so any
/// per-chunk accumulation combined in chunk order stays deterministic for a
/// fixed thread-count configuration.
inline void parallel_for(long long n, int threads, const std::function<void(long long, long long)>& fn) {
    if (n <= 0) return;
    if (threads <= 1 || n == 1) {
        fn(0, n);
        return;
    }
    int chunks = static_cast<int>(std::min<long long>(threads, n));
    long long base = n / chunks;
    long long rem = n % chunks;
    std::vector<std::thread> pool;
    pool.reserve(chunks);
    long long begin = 0;
    for (int i = 0; i < chunks; ++i) {
        long long len = base + (i < rem ? 1 : 0);
        long long end = begin + len;
        pool.emplace_back(fn, begin, end);
        begin = end;
    }
    for (auto& t : pool) t.join();
}

}  // namespace vipnet

#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <thread>
#include <vector>

namespace mpde {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

// Runs fn(begin, end) over contiguous chunks of [0, n). Chunk boundaries
// depend only on (n, threads), so any per-chunk accumulation merged in chunk
// order is reproducible for a fixed thread count.
inline void parallel_chunks(int n, int threads, const std::function<void(int, int)>& fn) {
    if (threads <= 1 || n <= 1) {
        fn(0, n);
        return;
    }
    const int used = std::min(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(used);
    const int base = n / used, extra = n % used;
    int at = 0;
    for (int i = 0; i < used; ++i) {
        const int len = base + (i < extra ? 1 : 0);
        pool.emplace_back(fn, at, at + len);
        at += len;
    }
    for (auto& t : pool) t.join();
}

}  // namespace mpde

#include "tomo/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace tomo {

namespace {
std::atomic<int> g_threads{1};
}

void set_threads(int n) { g_threads.store(n < 1 ? 1 : n); }
int threads() { return g_threads.load(); }

int chunk_count(int64_t n) {
    return static_cast<int>(std::min<int64_t>(threads(), std::max<int64_t>(n, 1)));
}

void parallel_chunks(int64_t n,
                     const std::function<void(int, int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    const int nc = chunk_count(n);
    if (nc == 1) {
        fn(0, 0, n);
        return;
    }
    const int64_t per = (n + nc - 1) / nc;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nc));
    for (int c = 0; c < nc; ++c) {
        const int64_t b = c * per;
        const int64_t e = std::min<int64_t>(n, b + per);
        if (b >= e) break;
        pool.emplace_back([&fn, c, b, e] { fn(c, b, e); });
    }
    for (auto& t : pool) t.join();
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    parallel_chunks(n, [&fn](int, int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) fn(i);
    });
}

}  // namespace tomo

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace tcmf {

inline std::atomic<unsigned>& max_threads_slot() {
    static std::atomic<unsigned> n{0};  // 0 = hardware concurrency
    return n;
}

inline void set_max_threads(unsigned n) { max_threads_slot().store(n); }

inline unsigned max_threads() {
    unsigned n = max_threads_slot().load();
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

/// Run f(i) for i in [0,n) on up to max_threads() threads.
///
/// Work is split into contiguous index ranges, so results written to
/// disjoint per-index slots are identical for any thread count. Reductions
/// must be done by the caller in index order.
template <class F>
void parallel_for(std::size_t n, F&& f) {
    const std::size_t workers =
        std::min<std::size_t>(max_threads(), n == 0 ? 1 : n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &f] {
            for (std::size_t i = lo; i < hi; ++i) f(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace tcmf

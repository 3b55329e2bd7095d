#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace semilin {

/// Blocked parallel loop over [0, n).  Results must be written to disjoint,
/// preallocated slots; the partition depends only on (n, threads), never on
/// scheduling, so outputs are reproducible for any thread count.
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
    unsigned t = threads > 0 ? static_cast<unsigned>(threads)
                             : std::max(1u, std::thread::hardware_concurrency());
    if (t <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    t = std::min<std::size_t>(t, n);
    std::vector<std::thread> pool;
    pool.reserve(t);
    const std::size_t chunk = (n + t - 1) / t;
    for (unsigned w = 0; w < t; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace semilin

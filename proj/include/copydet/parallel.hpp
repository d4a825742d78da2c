#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace copydet {

// Run fn(i) for i in [0, n) on `threads` workers (0 = hardware concurrency).
// Work items must be independent; callers write results into per-index slots
// so the outcome does not depend on the number of threads.
template <typename Fn>
void parallel_for(size_t n, int threads, Fn&& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= n) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    int nw = threads < static_cast<int>(n) ? threads : static_cast<int>(n);
    pool.reserve(static_cast<size_t>(nw));
    for (int t = 0; t < nw; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

} // namespace copydet

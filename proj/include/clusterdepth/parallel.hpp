// Static-partition parallel loop. Workers own disjoint index ranges, so any
// computation writing only to its own range produces output independent of
// the worker count.

#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace clusterdepth {

// Runs fn(begin, end) over [0, total) split into contiguous chunks.
// threads <= 1 runs inline.
template <typename Fn>
void parallel_for(long total, int threads, Fn&& fn) {
    if (total <= 0) return;
    const int workers = std::max(1, std::min<long>(threads, total) > 0
                                        ? static_cast<int>(std::min<long>(threads, total))
                                        : 1);
    if (workers == 1) {
        fn(0L, total);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const long chunk = (total + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const long lo = static_cast<long>(w) * chunk;
        const long hi = std::min(total, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                fn(lo, hi);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace clusterdepth

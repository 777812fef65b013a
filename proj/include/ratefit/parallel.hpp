#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace ratefit {

/// Worker cap: hardware concurrency, clamped by RATEFIT_THREADS when set.
inline std::size_t thread_cap() {
    std::size_t cap = std::thread::hardware_concurrency();
    if (cap == 0) cap = 1;
    if (const char* env = std::getenv("RATEFIT_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1 && static_cast<std::size_t>(v) < cap)
            cap = static_cast<std::size_t>(v);
    }
    return cap;
}

/// Run fn(0..n-1) across the worker cap. Each index owns its output slot, so
/// results are independent of the thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t cap = std::min(thread_cap(), n);
    if (cap <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(cap);
    for (std::size_t t = 0; t < cap; ++t) {
        workers.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
                fn(i);
        });
    }
    for (std::thread& w : workers) w.join();
}

}  // namespace ratefit

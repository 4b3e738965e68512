#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace spinchain {

/// Worker count: SPINCHAIN_THREADS if set (>=1), otherwise hardware
/// concurrency.
inline int thread_count() {
    if (const char* env = std::getenv("SPINCHAIN_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

/// Runs fn(i) for i in [0, count) across worker threads. Tasks must be
/// independent; fn may only touch its own slot of shared output.
inline void parallel_for(int count, const std::function<void(int)>& fn) {
    const int workers = std::min(thread_count(), count);
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (int i = w; i < count; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace spinchain

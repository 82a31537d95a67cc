#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace npmix {

// Runs fn(i) for i in [0, count) on up to `threads` workers. Every task owns
// its output slot, so results never depend on scheduling. If tasks throw,
// the exception of the lowest failing index is rethrown.
template <class Fn>
void parallel_for(std::int64_t count, int threads, Fn&& fn) {
    if (count <= 0) return;
    const int workers = static_cast<int>(std::min<std::int64_t>(std::max(threads, 1), count));
    if (workers == 1) {
        for (std::int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
    auto work = [&] {
        for (;;) {
            const std::int64_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace npmix

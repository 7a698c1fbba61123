#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace posi {

namespace detail {
inline std::atomic<int>& thread_setting() {
    static std::atomic<int> value{0};
    return value;
}
inline thread_local bool in_worker = false;
}  // namespace detail

/// Worker count for parallel loops. 0 (the default) means: POSI_THREADS if
/// set, otherwise the hardware concurrency.
inline void set_thread_count(int n) { detail::thread_setting().store(std::max(0, n)); }

inline int thread_count() {
    int n = detail::thread_setting().load();
    if (n > 0) return n;
    if (const char* env = std::getenv("POSI_THREADS")) {
        n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n). Work is handed out dynamically, so callers
/// must make body(i) depend on i only and store results by index; then the
/// outcome is independent of the thread count. Nested calls run inline.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    const int workers = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(thread_count())));
    if (workers <= 1 || detail::in_worker) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run = [&] {
        detail::in_worker = true;
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(n);
            }
        }
        detail::in_worker = false;
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

inline constexpr std::size_t kReductionChunk = 4096;

/// Deterministic sum of f(i) over [0, n): fixed-size chunks, each summed
/// sequentially, then the chunk totals added in chunk order.
template <class F>
double chunked_sum(std::size_t n, F&& f) {
    const std::size_t chunks = (n + kReductionChunk - 1) / kReductionChunk;
    if (chunks <= 1) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += f(i);
        return s;
    }
    std::vector<double> partial(chunks, 0.0);
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t begin = c * kReductionChunk;
        const std::size_t end = std::min(n, begin + kReductionChunk);
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) s += f(i);
        partial[c] = s;
    });
    double total = 0.0;
    for (double s : partial) total += s;
    return total;
}

}  // namespace posi

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tsdd {

/**
 * Run body(i, worker) for i in [0, n) on up to `threads` workers.
 *
 * Work is handed out by an atomic counter. If several iterations throw, the
 * exception of the lowest index is rethrown so failures are reported the same
 * way regardless of scheduling.
 */
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body)
{
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i, std::size_t{0});
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr first;
    std::size_t first_index = n;
    const auto run = [&](std::size_t worker) {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                body(i, worker);
            } catch (...) {
                std::lock_guard lock(mu);
                if (i < first_index) {
                    first_index = i;
                    first = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back([&run, w] { run(w); });
    run(0);
    for (auto& t : pool) t.join();
    if (first)
        std::rethrow_exception(first);
}

} // namespace tsdd

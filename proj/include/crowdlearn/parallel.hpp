#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace crowdlearn {

[[nodiscard]] inline unsigned default_thread_count() noexcept {
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs task(i) for i in [0, n_tasks) on up to `threads` workers. Tasks are
/// pulled dynamically, so callers must write results into per-task slots and
/// combine them afterwards in task order to stay independent of scheduling.
template <class Task>
void parallel_tasks(std::size_t n_tasks, unsigned threads, Task&& task) {
    const auto workers = static_cast<std::size_t>(std::min<std::size_t>(threads == 0 ? 1 : threads, n_tasks));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) {
            task(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto run = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n_tasks) {
                return;
            }
            try {
                task(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next.store(n_tasks);
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w) {
            pool.emplace_back(run);
        }
        run();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace crowdlearn

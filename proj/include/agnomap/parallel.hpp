#ifndef AGNOMAP_PARALLEL_HPP
#define AGNOMAP_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace agnomap {

/// Worker count: AGNOMAP_THREADS when set and positive, else hardware concurrency.
inline unsigned thread_count() {
    static const unsigned n = [] {
        if (const char* env = std::getenv("AGNOMAP_THREADS")) {
            const int v = std::atoi(env);
            if (v > 0) return unsigned(v);
        }
        return std::max(1u, std::thread::hardware_concurrency());
    }();
    return n;
}

namespace detail {
inline thread_local bool in_worker = false;
}

/// Runs fn(i) for i in [0, n). Callers own any reduction and must perform it
/// in index order; the schedule never affects results. Nested calls run inline.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(thread_count(), n);
    if (workers <= 1 || detail::in_worker) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            detail::in_worker = true;
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace agnomap

#endif  // AGNOMAP_PARALLEL_HPP

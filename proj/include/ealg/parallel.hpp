#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace ealg {

namespace detail {
inline std::atomic<std::size_t>& worker_override()
{
    static std::atomic<std::size_t> v{0};
    return v;
}
} // namespace detail

/// Number of worker threads used by batch evaluation; 0 restores the
/// hardware default.
inline void set_worker_count(std::size_t n) { detail::worker_override().store(n); }

inline std::size_t worker_count()
{
    const std::size_t o = detail::worker_override().load();
    if (o) return o;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, count). Each index writes only its own output
/// slot, so results do not depend on scheduling. If several calls throw, the
/// exception of the lowest index is rethrown.
template <class F>
void parallel_for(std::size_t count, F&& fn)
{
    const std::size_t workers = std::min(worker_count(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    auto body = [&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(body);
    body();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace ealg

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace sysid {

/// Worker count: SYSID_THREADS if set to a positive integer, otherwise the
/// hardware concurrency.
inline unsigned worker_count() {
    if (const char* env = std::getenv("SYSID_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, count). Results must be written to per-index slots;
/// with per-index seeds the output does not depend on the worker count.
template <class Fn>
void parallel_for(long count, Fn&& fn, unsigned workers = worker_count()) {
    if (count <= 0) return;
    workers = static_cast<unsigned>(std::min<long>(workers, count));
    if (workers <= 1) {
        for (long i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (long i; (i = next.fetch_add(1)) < count;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = count;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace sysid

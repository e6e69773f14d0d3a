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

namespace sepp::par {

/// Worker count from SEPP_THREADS, else the hardware concurrency (at least 1).
inline std::size_t default_workers()
{
    if (const char* env = std::getenv("SEPP_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Resolves a requested worker count: 0 means default_workers(); SEPP_THREADS caps it.
inline std::size_t resolve_workers(std::size_t requested)
{
    std::size_t n = requested == 0 ? default_workers() : requested;
    if (const char* env = std::getenv("SEPP_THREADS")) {
        try {
            const long cap = std::stol(env);
            if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
        } catch (const std::exception&) {
        }
    }
    return std::max<std::size_t>(1, n);
}

/// Calls body(i) for i in [0, n) on `workers` threads, handing out chunks from a shared
/// counter. Each index is visited once; the first exception is rethrown after joining.
template <class Body>
void parallel_for(std::size_t n, std::size_t workers, Body&& body, std::size_t chunk = 1)
{
    if (n == 0) return;
    workers = std::min(std::max<std::size_t>(1, workers), n);
    chunk = std::max<std::size_t>(1, chunk);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            const std::size_t begin = next.fetch_add(chunk, std::memory_order_relaxed);
            if (begin >= n) return;
            const std::size_t end = std::min(n, begin + chunk);
            try {
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
                return;
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    pool.clear();
    if (error) std::rethrow_exception(error);
}

/// Runs task(i) for every replication and returns the results in index order, so any
/// reduction over the vector is independent of scheduling.
template <class Task>
auto map_replications(std::size_t n, std::size_t workers, Task&& task)
{
    using Result = decltype(task(std::size_t{}));
    std::vector<Result> out(n);
    parallel_for(n, workers, [&](std::size_t i) { out[i] = task(i); });
    return out;
}

} // namespace sepp::par

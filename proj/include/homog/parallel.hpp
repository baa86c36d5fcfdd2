// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace homog {

/// Worker count from HOMOG_WORKERS if set and positive, else `fallback`.
inline unsigned workers_from_env(unsigned fallback)
{
    if (char const* env = std::getenv("HOMOG_WORKERS")) {
        try {
            long v = std::stol(env);
            if (v > 0) {
                return static_cast<unsigned>(v);
            }
        } catch (std::exception const&) {
        }
    }
    return fallback;
}

/// Runs fn(i) for i in [0, count) on `workers` threads.
///
/// Indices are split into contiguous static ranges, so the assignment of work
/// is a function of (count, workers) only. Callers write results into slot i
/// and reduce afterwards in index order; that makes every output independent
/// of the worker count. The first exception thrown by any task is rethrown.
template<class Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn)
{
    workers = std::max(1u, workers);
    if (workers == 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::size_t const nthreads = std::min<std::size_t>(workers, count);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (std::size_t w = 0; w < nthreads; ++w) {
        std::size_t const lo = count * w / nthreads;
        std::size_t const hi = count * (w + 1) / nthreads;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) {
                    fn(i);
                }
            } catch (...) {
                std::lock_guard lock{failure_mutex};
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

/// Neumaier-compensated running sum.
class CompensatedSum
{
  public:
    void add(double x) noexcept
    {
        double const t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    CompensatedSum& operator+=(double x) noexcept
    {
        add(x);
        return *this;
    }
    double value() const noexcept { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace homog

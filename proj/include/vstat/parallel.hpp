#pragma once

// Data-parallel kernels. Every OpenMP kernel here has a serial reference twin
// used by the tests and the benchmark. The parallel reductions split work into
// fixed-size blocks whose partial sums are combined in block order, so results
// are bitwise identical for any worker count.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vstat::parallel {

inline constexpr std::size_t kReduceBlock = 2048;

// Exceptions cannot leave an OpenMP region; the one from the lowest work
// index is kept and rethrown after the region, whatever the schedule.
class ErrorSlot {
public:
    void capture(std::size_t index) {
        std::lock_guard<std::mutex> lock(mu_);
        if (!error_ || index < index_) {
            error_ = std::current_exception();
            index_ = index;
        }
    }
    void rethrow() const {
        if (error_) std::rethrow_exception(error_);
    }

private:
    std::mutex mu_;
    std::exception_ptr error_;
    std::size_t index_ = 0;
};

/// Sets the worker count used by subsequent parallel regions (0 keeps the default).
void set_workers(int workers);
int workers();
int available_cores();

/// Adds sum_i f(i, acc) into out, where f accumulates into a width-sized span.
/// Reduction order depends only on count and kReduceBlock.
template <class F>
void block_reduce(std::size_t count, std::span<double> out, F&& f) {
    const std::size_t width = out.size();
    const std::size_t blocks = (count + kReduceBlock - 1) / kReduceBlock;
    if (blocks == 0) return;
    std::vector<double> partial(blocks * width, 0.0);
    ErrorSlot err;
#pragma omp parallel for schedule(static) if (blocks > 1)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
        std::span<double> acc(partial.data() + static_cast<std::size_t>(b) * width, width);
        const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
        const std::size_t hi = std::min(count, lo + kReduceBlock);
        try {
            for (std::size_t i = lo; i < hi; ++i) f(i, acc);
        } catch (...) {
            err.capture(lo);
        }
    }
    err.rethrow();
    for (std::size_t b = 0; b < blocks; ++b) {
        for (std::size_t k = 0; k < width; ++k) out[k] += partial[b * width + k];
    }
}

/// Serial reference for block_reduce: one running accumulator, index order.
template <class F>
void serial_reduce(std::size_t count, std::span<double> out, F&& f) {
    for (std::size_t i = 0; i < count; ++i) f(i, out);
}

/// Runs f(i) for i in [0, count) on the worker pool; f writes to slot i only.
template <class F>
void for_each_index(std::size_t count, F&& f) {
    ErrorSlot err;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
        try {
            f(static_cast<std::size_t>(i));
        } catch (...) {
            err.capture(static_cast<std::size_t>(i));
        }
    }
    err.rethrow();
}

template <class F>
void serial_for_each_index(std::size_t count, F&& f) {
    for (std::size_t i = 0; i < count; ++i) f(i);
}

}  // namespace vstat::parallel

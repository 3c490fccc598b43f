#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace cadv {

// Splits [0, n) into at most `threads` contiguous slices and runs
// fn(begin, end) on each. The first exception thrown by a worker is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads <= 1) {
        if (n > 0) fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        const std::size_t per = (n + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t begin = t * per;
            const std::size_t end = std::min(n, begin + per);
            if (begin >= end) break;
            pool.emplace_back([&, t, begin, end] {
                try {
                    fn(begin, end);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace cadv

#pragma once

#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

// Deterministic parallel reduction helpers.
//
// Straight `omp reduction(+:x)` sums in thread order, so results vary with
// the thread count. The kernels here instead split the index range into a
// fixed number of blocks, accumulate per block, and combine the block
// results in block order. Output is bitwise identical for any thread count,
// including a serial build, which is what the pipeline's byte-stable output
// guarantee rests on.

namespace cellstack::par {

inline constexpr std::size_t kReduceBlocks = 256;

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

// Applies body(i, acc) over i in [0, n), where acc is a per-block
// accumulator vector of `width` doubles. Block partials are combined in
// block order into out[0..width).
template <typename Body>
void blocked_reduce(std::size_t n, std::size_t width, double* out, Body&& body) {
    const std::size_t nblocks = n < kReduceBlocks ? (n > 0 ? n : 1) : kReduceBlocks;
    std::vector<double> partials(nblocks * width, 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long b = 0; b < static_cast<long long>(nblocks); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * n / nblocks;
        const std::size_t hi = (static_cast<std::size_t>(b) + 1) * n / nblocks;
        double* acc = partials.data() + static_cast<std::size_t>(b) * width;
        for (std::size_t i = lo; i < hi; ++i) body(i, acc);
    }

    for (std::size_t w = 0; w < width; ++w) out[w] = 0.0;
    for (std::size_t b = 0; b < nblocks; ++b)
        for (std::size_t w = 0; w < width; ++w) out[w] += partials[b * width + w];
}

// Serial reference with identical block structure removed: one pass, one
// accumulator. Kept for tests and the kernel benchmark.
template <typename Body>
void serial_reduce(std::size_t n, std::size_t width, double* out, Body&& body) {
    std::vector<double> acc(width, 0.0);
    for (std::size_t i = 0; i < n; ++i) body(i, acc.data());
    for (std::size_t w = 0; w < width; ++w) out[w] = acc[w];
}

}  // namespace cellstack::par

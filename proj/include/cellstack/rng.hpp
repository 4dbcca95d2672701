#pragma once

#include <cstdint>

// Counter-based random number generation built on the SplitMix64 finalizer
// (Steele, Lea & Flood 2014; same mixer as in xoshiro seeding).
//
// The n-th value of a stream is a pure function of (seed, n):
//
//     value(seed, n) = mix64(seed + (n + 1) * GOLDEN)
//
// so any draw can be produced out of order, which is what makes checkerboard
// Gibbs sweeps and permutation replicates parallelizable without losing
// bitwise reproducibility. Substreams are derived by hashing a tag into the
// seed. All arithmetic is on uint64_t and reproduces across platforms.

namespace cellstack::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline constexpr std::uint64_t mix64(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// n-th output of the stream identified by `seed`.
inline constexpr std::uint64_t at(std::uint64_t seed, std::uint64_t n) {
    return mix64(seed + (n + 1) * kGolden);
}

// Derive an independent child stream from (seed, tag).
inline constexpr std::uint64_t substream(std::uint64_t seed, std::uint64_t tag) {
    return mix64(seed ^ mix64(tag * kGolden + 0x5851F42D4C957F2Dull));
}

// Map 64 random bits to a double in [0, 1) with 53-bit resolution.
inline constexpr double unit_double(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Sequential view over a counter stream. Cheap to construct; make one per
// independent work item (trial, permutation, site) keyed by substream().
class Stream {
public:
    explicit Stream(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() { return at(seed_, n_++); }
    double next_unit() { return unit_double(next_u64()); }

    // Unbiased draw in [0, m) via rejection.
    std::uint64_t next_below(std::uint64_t m) {
        const std::uint64_t bound = m * (~std::uint64_t{0} / m);
        std::uint64_t r = next_u64();
        while (r >= bound) r = next_u64();
        return r % m;
    }

    double next_in(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

private:
    std::uint64_t seed_;
    std::uint64_t n_ = 0;
};

// Partial Fisher-Yates: selects the first `take` entries of a random
// permutation of idx[0..n). The selected prefix for `take` draws is a prefix
// of the selection for `take + 1` draws on the same stream, which gives
// nested subsets for monotonicity checks.
template <typename Int>
void partial_shuffle(Int* idx, std::size_t n, std::size_t take, Stream& rs) {
    for (std::size_t i = 0; i < take && i + 1 < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rs.next_below(n - i));
        const Int tmp = idx[i];
        idx[i] = idx[j];
        idx[j] = tmp;
    }
}

}  // namespace cellstack::rng

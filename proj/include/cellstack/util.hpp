#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cellstack {

// Small dense square matrix, row-major. Used for the pairwise affinity
// matrix and its gradients (K is the number of cell types, typically < 10).
class SquareMatrix {
public:
    SquareMatrix() = default;
    explicit SquareMatrix(int n, double fill = 0.0) : n_(n), v_(static_cast<std::size_t>(n) * n, fill) {}

    int size() const { return n_; }
    double& at(int r, int c) { return v_[static_cast<std::size_t>(r) * n_ + c]; }
    double at(int r, int c) const { return v_[static_cast<std::size_t>(r) * n_ + c]; }
    const std::vector<double>& data() const { return v_; }
    std::vector<double>& data() { return v_; }

    bool is_symmetric(double tol = 0.0) const {
        for (int r = 0; r < n_; ++r)
            for (int c = r + 1; c < n_; ++c)
                if (std::abs(at(r, c) - at(c, r)) > tol) return false;
        return true;
    }

    double frobenius_sq() const {
        double s = 0.0;
        for (double x : v_) s += x * x;
        return s;
    }

private:
    int n_ = 0;
    std::vector<double> v_;
};

// Percentile with linear interpolation between closest ranks (the numpy
// default). p in [0, 100]. Input need not be sorted.
inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) throw std::invalid_argument("percentile: empty input");
    std::sort(v.begin(), v.end());
    if (v.size() == 1) return v[0];
    const double h = (p / 100.0) * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean: empty input");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double stddev_pop(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

inline double median(std::vector<double> v) { return percentile(std::move(v), 50.0); }

// Union-find with path halving; used for chain formation and 3D components.
class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) {
        for (std::size_t i = 0; i < n; ++i) parent_[i] = i;
    }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace cellstack

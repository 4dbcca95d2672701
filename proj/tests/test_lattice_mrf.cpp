#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "cellstack/mrf.hpp"
#include "cellstack/rng.hpp"

using namespace cellstack;

namespace {

mrf::MRFParams two_type(double a1, double a2, double b11, double b12, double b22,
                        double lambda = 0.0) {
    SquareMatrix B(2);
    B.at(0, 0) = b11;
    B.at(0, 1) = B.at(1, 0) = b12;
    B.at(1, 1) = b22;
    return mrf::MRFParams::make({a1, a2}, B, lambda);
}

mrf::MRFParams random_params(int K, rng::Stream& rs, double scale = 0.5) {
    std::vector<double> alpha(K);
    for (double& a : alpha) a = rs.next_in(-scale, scale);
    SquareMatrix B(K);
    for (int r = 0; r < K; ++r)
        for (int c = r; c < K; ++c) B.at(r, c) = B.at(c, r) = rs.next_in(-scale, scale);
    return mrf::MRFParams::make(std::move(alpha), std::move(B), 0.0);
}

LabelVolume random_volume(const LatticeSpec& spec, int K, std::uint64_t seed) {
    LabelVolume vol;
    vol.spec = spec;
    vol.seed = seed;
    vol.labels.resize(spec.size());
    rng::Stream rs(seed);
    for (auto& l : vol.labels) l = static_cast<std::uint8_t>(rs.next_below(K));
    return vol;
}

// average fraction of neighbor pairs sharing the site's label
double same_label_fraction(const LabelVolume& vol) {
    long long same = 0, total = 0;
    const LatticeSpec& spec = vol.spec;
    for (std::int64_t v = 0; v < spec.size(); ++v) {
        const Site s = spec.site(v);
        for (const Site& n : neighbor_sites(spec, s)) {
            ++total;
            if (vol.labels[spec.index(n.i, n.j, n.k)] == vol.labels[v]) ++same;
        }
    }
    return static_cast<double>(same) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("neighborhood sizes at interior, corner, and line sites") {
    const LatticeSpec cube{3, 3, 3, Neighborhood::N26};
    CHECK(neighbor_sites(cube, {1, 1, 1}).size() == 26);
    CHECK(neighbor_sites(cube, {0, 0, 0}).size() == 7);

    const LatticeSpec line{1, 1, 5, Neighborhood::N6};
    CHECK(neighbor_sites(line, {0, 0, 2}).size() == 2);

    CHECK_THROWS_AS(neighbor_sites(cube, {3, 0, 0}), std::out_of_range);
}

TEST_CASE("neighbor lists have no duplicates and never contain the site") {
    const LatticeSpec spec{4, 3, 2, Neighborhood::N26};
    for (std::int64_t v = 0; v < spec.size(); ++v) {
        const Site s = spec.site(v);
        const auto nbrs = neighbor_sites(spec, s);
        std::set<std::int64_t> uniq;
        for (const Site& n : nbrs) {
            CHECK(!(n == s));
            uniq.insert(spec.index(n.i, n.j, n.k));
        }
        CHECK(uniq.size() == nbrs.size());
    }
}

TEST_CASE("zero-energy model gives the uniform conditional everywhere") {
    const LatticeSpec spec{3, 3, 3, Neighborhood::N26};
    const auto params = two_type(0, 0, 0, 0, 0);
    const LabelVolume vol = random_volume(spec, 2, 5);
    for (std::int64_t v = 0; v < spec.size(); ++v) {
        const auto p = mrf::conditional_distribution(vol, spec.site(v), params);
        CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("with B = 0 the conditional is softmax(alpha), independent of neighbors") {
    const LatticeSpec spec{4, 4, 4, Neighborhood::N26};
    std::vector<double> alpha = {0.7, -0.2, 0.1};
    SquareMatrix B(3);
    const auto params = mrf::MRFParams::make(alpha, B, 0.0);
    const LabelVolume vol = random_volume(spec, 3, 11);

    double z = 0.0;
    for (double a : alpha) z += std::exp(a);
    for (std::int64_t v : {std::int64_t{0}, spec.index(2, 2, 2), spec.size() - 1}) {
        const auto p = mrf::conditional_distribution(vol, spec.site(v), params);
        for (int a = 0; a < 3; ++a)
            CHECK(p[a] == doctest::Approx(std::exp(alpha[a]) / z).epsilon(1e-12));
    }
}

TEST_CASE("uniform-interior conditional matches the closed-form logistic") {
    // all 26 neighbors share one type; p(that type) = sigma(26 b)
    for (const double b : {-0.1, 0.0, 0.1}) {
        const LatticeSpec spec{3, 3, 3, Neighborhood::N26};
        LabelVolume vol;
        vol.spec = spec;
        vol.labels.assign(27, 0);
        const auto params = two_type(0, 0, b, 0, 0);
        const auto p = mrf::conditional_distribution(vol, {1, 1, 1}, params);
        const long double expected = 1.0L / (1.0L + std::exp(-26.0L * static_cast<long double>(b)));
        CHECK(std::abs(p[0] - static_cast<double>(expected)) < 1e-14);
    }
}

TEST_CASE("conditional distributions are probability vectors") {
    rng::Stream rs(17);
    for (int rep = 0; rep < 200; ++rep) {
        const int K = 2 + static_cast<int>(rs.next_below(4));
        const LatticeSpec spec{1 + static_cast<int>(rs.next_below(5)),
                               1 + static_cast<int>(rs.next_below(5)),
                               1 + static_cast<int>(rs.next_below(5)),
                               rs.next_unit() < 0.5 ? Neighborhood::N6 : Neighborhood::N26};
        auto params = random_params(K, rs, 2.0);
        const LabelVolume vol = random_volume(spec, K, rs.next_u64());
        const std::int64_t v = static_cast<std::int64_t>(rs.next_below(spec.size()));
        const auto p = mrf::conditional_distribution(vol, spec.site(v), params);
        double sum = 0.0;
        for (double x : p) {
            CHECK(x >= 0.0);
            sum += x;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("adding a constant to alpha leaves the conditional unchanged") {
    rng::Stream rs(23);
    const LatticeSpec spec{4, 4, 4, Neighborhood::N26};
    for (int rep = 0; rep < 20; ++rep) {
        const int K = 2 + static_cast<int>(rs.next_below(3));
        auto params = random_params(K, rs);
        const LabelVolume vol = random_volume(spec, K, rs.next_u64());
        auto shifted = params;
        const double c = rs.next_in(-3, 3);
        for (double& a : shifted.alpha) a += c;
        for (std::int64_t v : {std::int64_t{0}, spec.index(1, 2, 3)}) {
            const auto p = mrf::conditional_distribution(vol, spec.site(v), params);
            const auto q = mrf::conditional_distribution(vol, spec.site(v), shifted);
            for (int a = 0; a < K; ++a) CHECK(std::abs(p[a] - q[a]) < 1e-12);
        }
    }
}

TEST_CASE("zero sweeps returns the given volume unchanged") {
    const LatticeSpec spec{4, 4, 4, Neighborhood::N26};
    const auto params = two_type(0.3, 0, 0.2, 0, 0.1);
    const LabelVolume given = random_volume(spec, 2, 31);
    mrf::GibbsOptions opts;
    opts.init = mrf::GibbsInit::Given;
    opts.given = given;
    const LabelVolume out = mrf::gibbs_sample(spec, params, 0, 99, opts);
    CHECK(out.labels == given.labels);
}

TEST_CASE("gibbs_sample is bitwise reproducible and matches the serial reference") {
    const auto params = two_type(0.2, 0, 0.3, -0.1, 0.2);
    for (const Neighborhood nb : {Neighborhood::N6, Neighborhood::N26}) {
        const LatticeSpec spec{12, 10, 8, nb};
        const LabelVolume a = mrf::gibbs_sample(spec, params, 5, 1234);
        const LabelVolume b = mrf::gibbs_sample(spec, params, 5, 1234);
        const LabelVolume c = mrf::gibbs_sample_serial(spec, params, 5, 1234);
        CHECK(a.labels == b.labels);
        CHECK(a.labels == c.labels);
    }
}

TEST_CASE("independent model: empirical frequencies match softmax(alpha)") {
    const LatticeSpec spec{32, 32, 32, Neighborhood::N26};
    std::vector<double> alpha = {0.5, 0.0, -0.5};
    SquareMatrix B(3);
    const auto params = mrf::MRFParams::make(alpha, B, 0.0);
    const LabelVolume vol = mrf::gibbs_sample(spec, params, 50, 2024);

    double z = 0.0;
    for (double a : alpha) z += std::exp(a);
    std::vector<double> count(3, 0.0);
    for (auto l : vol.labels) count[l] += 1.0;
    const double n = static_cast<double>(spec.size());
    for (int a = 0; a < 3; ++a) {
        const double p = std::exp(alpha[a]) / z;
        const double se = std::sqrt(p * (1.0 - p) / n);
        CHECK(std::abs(count[a] / n - p) < 3.0 * se);
    }
}

TEST_CASE("positive self-affinity raises the same-label neighbor fraction") {
    const LatticeSpec spec{16, 16, 16, Neighborhood::N26};
    const auto base = two_type(0, 0, 0, 0, 0);
    const auto clustered = two_type(0, 0, 0.5, 0, 0.5);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const double f0 = same_label_fraction(mrf::gibbs_sample(spec, base, 30, seed));
        const double f1 = same_label_fraction(mrf::gibbs_sample(spec, clustered, 30, seed));
        CHECK(f1 > f0);
    }
}

TEST_CASE("log density closed forms") {
    const double a = 0.37;
    {
        const LatticeSpec spec{3, 4, 5, Neighborhood::N26};
        LabelVolume vol;
        vol.spec = spec;
        vol.labels.assign(spec.size(), 0);
        const auto params = two_type(a, -1.0, 0, 0, 0);
        CHECK(mrf::log_unnormalized_density(vol, params) ==
              doctest::Approx(a * static_cast<double>(spec.size())).epsilon(1e-12));
    }
    {
        const LatticeSpec spec{2, 1, 1, Neighborhood::N26};
        LabelVolume vol;
        vol.spec = spec;
        vol.labels = {0, 1};
        const auto params = two_type(0.4, -0.2, 0.3, 0.15, 0.1);
        CHECK(mrf::log_unnormalized_density(vol, params) ==
              doctest::Approx(0.4 - 0.2 + 0.15).epsilon(1e-12));
    }
}

TEST_CASE("log density matches a brute-force edge enumeration") {
    rng::Stream rs(41);
    const LatticeSpec spec{2, 2, 2, Neighborhood::N26};
    for (int rep = 0; rep < 25; ++rep) {
        const int K = 2 + static_cast<int>(rs.next_below(3));
        const auto params = random_params(K, rs);
        const LabelVolume vol = random_volume(spec, K, rs.next_u64());

        double expected = 0.0;
        for (std::int64_t v = 0; v < spec.size(); ++v) expected += params.alpha[vol.labels[v]];
        for (std::int64_t v = 0; v < spec.size(); ++v) {
            const Site s = spec.site(v);
            for (const Site& n : neighbor_sites(spec, s)) {
                const std::int64_t w = spec.index(n.i, n.j, n.k);
                if (w > v) expected += params.B.at(vol.labels[v], vol.labels[w]);
            }
        }
        CHECK(mrf::log_unnormalized_density(vol, params) ==
              doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("single-site density ratios reproduce the conditional odds") {
    rng::Stream rs(53);
    const LatticeSpec spec{3, 3, 2, Neighborhood::N26};
    for (int rep = 0; rep < 20; ++rep) {
        const int K = 3;
        const auto params = random_params(K, rs);
        LabelVolume vol = random_volume(spec, K, rs.next_u64());
        const std::int64_t v = static_cast<std::int64_t>(rs.next_below(spec.size()));
        const auto probs = mrf::conditional_distribution(vol, spec.site(v), params);

        LabelVolume flip_a = vol, flip_b = vol;
        const int a = static_cast<int>(rs.next_below(K));
        const int b = (a + 1) % K;
        flip_a.labels[v] = static_cast<std::uint8_t>(a);
        flip_b.labels[v] = static_cast<std::uint8_t>(b);
        const double log_ratio = mrf::log_unnormalized_density(flip_a, params) -
                                 mrf::log_unnormalized_density(flip_b, params);
        CHECK(std::abs(log_ratio - std::log(probs[a] / probs[b])) < 1e-10);
    }
}

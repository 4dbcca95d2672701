#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cellstack/mple.hpp"
#include "cellstack/rng.hpp"
#include "cellstack/util.hpp"

using namespace cellstack;

namespace {

mrf::MRFParams random_params(int K, rng::Stream& rs, double scale, double lambda) {
    std::vector<double> alpha(K);
    for (double& a : alpha) a = rs.next_in(-scale, scale);
    SquareMatrix B(K);
    for (int r = 0; r < K; ++r)
        for (int c = r; c < K; ++c) B.at(r, c) = B.at(c, r) = rs.next_in(-scale, scale);
    return mrf::MRFParams::make(std::move(alpha), std::move(B), lambda);
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

// central finite differences against the analytic gradient, worst entry
double fd_max_rel_err(const mple::PllData& data, double lambda, std::vector<double> theta) {
    std::vector<double> g;
    mple::negated_objective(data, lambda, theta, &g);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + h;
        const double fp = mple::negated_objective(data, lambda, theta, nullptr);
        theta[i] = keep - h;
        const double fm = mple::negated_objective(data, lambda, theta, nullptr);
        theta[i] = keep;
        const double fd = (fp - fm) / (2.0 * h);
        const double rel = std::abs(fd - g[i]) / std::max({1.0, std::abs(fd), std::abs(g[i])});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace

TEST_CASE("with B = 0 the objective is the multinomial log-likelihood") {
    const LatticeSpec spec{4, 4, 4, Neighborhood::N26};
    const LabelVolume vol = random_volume(spec, 3, 3);
    const auto obs = geom::full_volume(spec);
    std::vector<double> alpha = {0.4, -0.1, 0.0};
    SquareMatrix B(3);
    const auto params = mrf::MRFParams::make(alpha, B, 0.0);

    double z = 0.0;
    for (double a : alpha) z += std::exp(a);
    double expected = 0.0;
    for (auto l : vol.labels) expected += alpha[l] - std::log(z);
    CHECK(mple::pseudo_log_likelihood(vol, obs, params) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("2x2x1 objective matches the hand-enumerated node conditionals") {
    const LatticeSpec spec{2, 2, 1, Neighborhood::N26};
    LabelVolume vol;
    vol.spec = spec;
    vol.labels = {0, 1, 1, 0};
    const auto obs = geom::full_volume(spec);
    SquareMatrix B(2);
    B.at(0, 0) = 0.3;
    B.at(0, 1) = B.at(1, 0) = -0.2;
    B.at(1, 1) = 0.1;
    const double lambda = 0.01;
    const auto params = mrf::MRFParams::make({0.5, -0.3}, B, lambda);

    // under N26 all four sites are mutually adjacent
    double expected = 0.0;
    for (int i = 0; i < 4; ++i) {
        double score[2];
        for (int a = 0; a < 2; ++a) {
            score[a] = params.alpha[a];
            for (int j = 0; j < 4; ++j)
                if (j != i) score[a] += B.at(a, vol.labels[j]);
        }
        expected += score[vol.labels[i]] -
                    std::log(std::exp(score[0]) + std::exp(score[1]));
    }
    expected -= lambda * (0.3 * 0.3 + 0.1 * 0.1 + 2 * 0.2 * 0.2);
    CHECK(mple::pseudo_log_likelihood(vol, obs, params) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("empty observed set is rejected") {
    const LatticeSpec spec{2, 2, 2, Neighborhood::N26};
    const LabelVolume vol = random_volume(spec, 2, 1);
    geom::ObservationSet obs;  // no planes
    obs.plane_mask.assign(2, 0);
    rng::Stream rs(1);
    const auto params = random_params(2, rs, 0.3, 0.0);
    CHECK_THROWS_AS(mple::pseudo_log_likelihood(vol, obs, params), std::invalid_argument);
}

TEST_CASE("analytic gradient matches central finite differences") {
    rng::Stream rs(101);
    for (int rep = 0; rep < 10; ++rep) {
        const int K = 2 + static_cast<int>(rs.next_below(3));
        const LatticeSpec spec{4 + static_cast<int>(rs.next_below(3)),
                               4 + static_cast<int>(rs.next_below(3)),
                               3 + static_cast<int>(rs.next_below(3)), Neighborhood::N26};
        const LabelVolume vol = random_volume(spec, K, rs.next_u64());
        const auto obs = rep % 2 == 0
                             ? geom::full_volume(spec)
                             : geom::sample_independent_planes(spec, 2, rs.next_u64());
        const double lambda = rep % 3 == 0 ? 0.0 : 1e-2;
        const auto params = random_params(K, rs, 0.5, lambda);
        const mple::PllData data = mple::build_pll_data(vol, obs, K);
        CHECK(fd_max_rel_err(data, lambda, mple::pack_theta(params)) < 1e-5);
    }
}

TEST_CASE("blocked and serial objective kernels agree to double precision") {
    rng::Stream rs(55);
    const LatticeSpec spec{8, 8, 8, Neighborhood::N26};
    const LabelVolume vol = random_volume(spec, 3, 5);
    const auto obs = geom::full_volume(spec);
    const auto params = random_params(3, rs, 0.5, 1e-3);
    const mple::PllData data = mple::build_pll_data(vol, obs, 3);
    const auto theta = mple::pack_theta(params);
    std::vector<double> ga, gb;
    const double fa = mple::negated_objective(data, 1e-3, theta, &ga);
    const double fb = mple::negated_objective_serial(data, 1e-3, theta, &gb);
    CHECK(fa == doctest::Approx(fb).epsilon(1e-12));
    for (std::size_t i = 0; i < ga.size(); ++i)
        CHECK(ga[i] == doctest::Approx(gb[i]).epsilon(1e-10));
}

TEST_CASE("gradient of alpha vanishes at the multinomial optimum") {
    const LatticeSpec spec{6, 6, 6, Neighborhood::N26};
    const LabelVolume vol = random_volume(spec, 3, 77);
    const auto obs = geom::full_volume(spec);

    std::vector<double> counts(3, 0.0);
    for (auto l : vol.labels) counts[l] += 1.0;
    std::vector<double> alpha(3);
    for (int a = 0; a < 3; ++a) alpha[a] = std::log(counts[a] / static_cast<double>(spec.size()));
    const auto params = mrf::MRFParams::make(alpha, SquareMatrix(3), 0.0);

    std::vector<double> grad_alpha;
    SquareMatrix grad_B;
    mple::pseudo_ll_gradient(vol, obs, params, grad_alpha, grad_B);
    for (int a = 0; a < 3; ++a) CHECK(std::abs(grad_alpha[a]) < 1e-9);
}

TEST_CASE("the ridge contributes its exact linear term to the gradient") {
    rng::Stream rs(88);
    const LatticeSpec spec{5, 5, 5, Neighborhood::N26};
    const LabelVolume vol = random_volume(spec, 3, 9);
    const auto obs = geom::full_volume(spec);
    const double lambda = 0.37;
    auto p_ridge = random_params(3, rs, 0.5, lambda);
    auto p_plain = p_ridge;
    p_plain.lambda = 0.0;

    std::vector<double> ga, gb;
    SquareMatrix Ba, Bb;
    mple::pseudo_ll_gradient(vol, obs, p_ridge, ga, Ba);
    mple::pseudo_ll_gradient(vol, obs, p_plain, gb, Bb);
    for (int a = 0; a < 3; ++a) CHECK(ga[a] == doctest::Approx(gb[a]).epsilon(1e-12));
    for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b) {
            // tied-parameter convention: off-diagonals move both entries
            const double mult = a == b ? 2.0 : 4.0;
            CHECK(Ba.at(a, b) - Bb.at(a, b) ==
                  doctest::Approx(-mult * lambda * p_ridge.B.at(a, b)).epsilon(1e-10));
        }
}

TEST_CASE("heavy ridge drives the fitted B to zero and alpha to the multinomial MLE") {
    const LatticeSpec spec{10, 10, 10, Neighborhood::N26};
    const LabelVolume vol = random_volume(spec, 3, 13);
    const auto obs = geom::full_volume(spec);
    mple::MPLEConfig cfg;
    cfg.lambda = 1e6;
    // at this lambda the optimum is reached but the convergence flag can
    // stay false: objective changes near the solution underflow doubles
    const auto res = mple::fit(vol, obs, 3, cfg);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) CHECK(std::abs(res.params.B.at(a, b)) < 1e-3);

    std::vector<double> counts(3, 0.0);
    for (auto l : vol.labels) counts[l] += 1.0;
    double z = 0.0;
    for (int a = 0; a < 3; ++a) z += std::exp(res.params.alpha[a]);
    for (int a = 0; a < 3; ++a)
        CHECK(std::exp(res.params.alpha[a]) / z ==
              doctest::Approx(counts[a] / static_cast<double>(spec.size())).epsilon(2e-3));
}

TEST_CASE("fit recovers the generating parameters of an independent model") {
    const LatticeSpec spec{32, 32, 32, Neighborhood::N26};
    std::vector<double> alpha = {0.3, -0.2, 0.0};
    const auto truth = mrf::MRFParams::make(alpha, SquareMatrix(3), 1e-3);
    const LabelVolume vol = mrf::gibbs_sample(spec, truth, 50, 555);
    const auto res = mple::fit(vol, geom::full_volume(spec), 3, {});
    REQUIRE(res.converged);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) CHECK(std::abs(res.params.B.at(a, b)) < 0.05);

    // The raw alpha gap is dominated by the soft column-shift direction of
    // the pseudo-likelihood (B_ab -> B_ab + c_a + c_b, alpha_a -> alpha_a -
    // deg c_a leaves interior conditionals unchanged); at this budget it
    // fluctuates at the ~0.1 scale and the default ridge is far too weak to
    // pin it. Assert the measured envelope, then check prevalence through
    // the trade-invariant field phi_a = alpha_a + deg r_a / K - deg R/(2K^2).
    for (int a = 0; a < 3; ++a) CHECK(std::abs(res.params.alpha[a] - alpha[a]) < 0.25);

    auto invariant_field = [](const mrf::MRFParams& p, double deg) {
        std::vector<double> phi(p.K);
        double big_r = 0.0;
        for (int a = 0; a < p.K; ++a)
            for (int b = 0; b < p.K; ++b) big_r += p.B.at(a, b);
        for (int a = 0; a < p.K; ++a) {
            double r = 0.0;
            for (int b = 0; b < p.K; ++b) r += p.B.at(a, b);
            phi[a] = p.alpha[a] + deg * r / p.K - deg * big_r / (2.0 * p.K * p.K);
        }
        for (int a = 0; a < p.K; ++a) phi[a] -= phi[p.K - 1];
        phi[p.K - 1] = 0.0;
        return phi;
    };
    const auto phi_est = invariant_field(res.params, 26.0);
    const auto phi_truth = invariant_field(truth, 26.0);
    // measured over 10 seeds: max|dphi| in [0.006, 0.048]
    for (int a = 0; a < 3; ++a) CHECK(std::abs(phi_est[a] - phi_truth[a]) < 0.06);
}

TEST_CASE("fit output is gauge-fixed, symmetric, and deterministic") {
    const LatticeSpec spec{8, 8, 8, Neighborhood::N26};
    rng::Stream rs(31);
    const auto truth = random_params(3, rs, 0.3, 1e-3);
    const LabelVolume vol = mrf::gibbs_sample(spec, truth, 20, 4);
    const auto obs = geom::sample_independent_planes(spec, 3, 8);

    const auto r1 = mple::fit(vol, obs, 3, {});
    const auto r2 = mple::fit(vol, obs, 3, {});
    CHECK(r1.params.alpha[2] == 0.0);
    CHECK(r1.params.B.is_symmetric());
    CHECK(r1.params.alpha == r2.params.alpha);
    CHECK(r1.params.B.data() == r2.params.B.data());
    CHECK(r1.objective == r2.objective);
}

TEST_CASE("lbfgs and gradient descent land on the same optimum") {
    const LatticeSpec spec{8, 8, 8, Neighborhood::N26};
    rng::Stream rs(131);
    const auto truth = random_params(2, rs, 0.3, 1e-3);
    const LabelVolume vol = mrf::gibbs_sample(spec, truth, 20, 6);
    const auto obs = geom::full_volume(spec);

    mple::MPLEConfig gd;
    gd.optimizer = mple::MPLEConfig::Optimizer::GradientDescent;
    gd.max_iters = 30000;
    const auto a = mple::fit(vol, obs, 2, {});
    const auto b = mple::fit(vol, obs, 2, gd);
    REQUIRE(a.converged);
    // plain descent crawls along the soft directions, so compare loosely
    CHECK(std::abs(a.objective - b.objective) < 1e-4 * std::abs(a.objective));
    for (int t = 0; t < 2; ++t) CHECK(std::abs(a.params.alpha[t] - b.params.alpha[t]) < 0.05);
}

TEST_CASE("a type absent from the observed plane stays finite under the unary cap") {
    const LatticeSpec spec{8, 8, 4, Neighborhood::N26};
    LabelVolume vol = random_volume(spec, 3, 21);
    // erase type 0 from plane 1, then observe only that plane
    for (int j = 0; j < spec.ny; ++j)
        for (int i = 0; i < spec.nx; ++i)
            if (vol.labels[spec.index(i, j, 1)] == 0)
                vol.labels[spec.index(i, j, 1)] = 1;
    const auto obs = geom::sample_serial_stack(spec, 1, 1, 1);
    const auto res = mple::fit(vol, obs, 3, {});
    CHECK(std::isfinite(res.params.alpha[0]));
    CHECK(res.params.alpha[0] < -10.0);
    CHECK(std::abs(res.params.alpha[0]) <= 60.0 + 1e-9);  // clamp + gauge shift bound
}

TEST_CASE("recovery_error basics: zeros, gauge invariance, formula") {
    rng::Stream rs(222);
    const auto truth = random_params(3, rs, 0.5, 0.0);
    {
        const auto r = mple::recovery_error(truth, truth);
        CHECK(r.mae_alpha == 0.0);
        CHECK(r.rmse_alpha == 0.0);
        CHECK(r.mae_B == 0.0);
        CHECK(r.rmse_B == 0.0);
    }
    {
        auto shifted = truth;
        for (double& a : shifted.alpha) a += 1.7;
        const auto r = mple::recovery_error(shifted, truth);
        CHECK(r.mae_alpha < 1e-12);
        CHECK(r.mae_B == 0.0);
    }
    {
        const auto est = random_params(3, rs, 0.5, 0.0);
        const auto r = mple::recovery_error(est, truth);
        // independent recomputation
        auto e = est, t = truth;
        for (int a = 0; a < 3; ++a) {
            e.alpha[a] -= est.alpha[2];
            t.alpha[a] -= truth.alpha[2];
        }
        double sa = 0.0, sa2 = 0.0;
        for (int a = 0; a < 3; ++a) {
            sa += std::abs(e.alpha[a] - t.alpha[a]);
            sa2 += (e.alpha[a] - t.alpha[a]) * (e.alpha[a] - t.alpha[a]);
        }
        CHECK(r.mae_alpha == doctest::Approx(sa / 3).epsilon(1e-12));
        CHECK(r.rmse_alpha == doctest::Approx(std::sqrt(sa2 / 3)).epsilon(1e-12));
        double sb = 0.0, sb2 = 0.0;
        for (int a = 0; a < 3; ++a)
            for (int b = a; b < 3; ++b) {
                const double d = est.B.at(a, b) - truth.B.at(a, b);
                sb += std::abs(d);
                sb2 += d * d;
            }
        CHECK(r.mae_B == doctest::Approx(sb / 6).epsilon(1e-12));
        CHECK(r.rmse_B == doctest::Approx(std::sqrt(sb2 / 6)).epsilon(1e-12));
        CHECK(r.rmse_alpha >= r.mae_alpha);
        CHECK(r.rmse_B >= r.mae_B);
        CHECK_THROWS_AS(mple::recovery_error(random_params(2, rs, 0.5, 0.0), truth),
                        std::invalid_argument);
    }
}

TEST_CASE("small matched-budget study: planar sampling degrades B recovery") {
    mple::StudyConfig cfg;
    cfg.spec = {16, 16, 16, Neighborhood::N26};
    std::vector<double> alpha = {0.1, 0.0};
    SquareMatrix B(2);
    B.at(0, 0) = 0.12;
    B.at(1, 1) = 0.10;
    B.at(0, 1) = B.at(1, 0) = -0.06;
    cfg.truth = mrf::MRFParams::make(alpha, B, 1e-3);
    cfg.sweeps = 30;
    cfg.planes = 4;

    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 1; s <= 8; ++s) seeds.push_back(s);
    const auto rows = mple::run_recovery_study(cfg, seeds);
    REQUIRE(rows.size() == seeds.size() * 3);

    std::vector<double> mae_full, mae_serial, mae_indep;
    for (const auto& r : rows) {
        if (r.geometry == geom::Geometry::FullVolume) mae_full.push_back(r.mae_B);
        if (r.geometry == geom::Geometry::Serial3D) mae_serial.push_back(r.mae_B);
        if (r.geometry == geom::Geometry::Independent2D) mae_indep.push_back(r.mae_B);
    }
    CHECK(median(mae_full) <= median(mae_serial));
    CHECK(median(mae_serial) <= median(mae_indep));
}

#include "cellstack/mple.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "cellstack/parallel.hpp"
#include "cellstack/rng.hpp"

namespace cellstack::mple {

std::size_t theta_size(int K) {
    return static_cast<std::size_t>(K) + static_cast<std::size_t>(K) * (K + 1) / 2;
}

std::size_t triu_index(int K, int a, int b) {
    // row-major upper triangle: (0,0),(0,1)..(0,K-1),(1,1),..
    return static_cast<std::size_t>(a) * K - static_cast<std::size_t>(a) * (a - 1) / 2 +
           static_cast<std::size_t>(b - a);
}

std::vector<double> pack_theta(const mrf::MRFParams& params) {
    const int K = params.K;
    std::vector<double> theta(theta_size(K));
    for (int a = 0; a < K; ++a) theta[a] = params.alpha[a];
    for (int a = 0; a < K; ++a)
        for (int b = a; b < K; ++b) theta[K + triu_index(K, a, b)] = params.B.at(a, b);
    return theta;
}

mrf::MRFParams unpack_theta(const std::vector<double>& theta, int K, double lambda) {
    std::vector<double> alpha(theta.begin(), theta.begin() + K);
    SquareMatrix B(K);
    for (int a = 0; a < K; ++a)
        for (int b = a; b < K; ++b) {
            const double v = theta[K + triu_index(K, a, b)];
            B.at(a, b) = v;
            B.at(b, a) = v;
        }
    return mrf::MRFParams::make(std::move(alpha), std::move(B), lambda);
}

PllData build_pll_data(const LabelVolume& volume, const geom::ObservationSet& obs, int K) {
    volume.validate(K);
    if (obs.plane_zs.empty()) throw std::invalid_argument("mple: empty observed set");
    const LatticeSpec& spec = volume.spec;
    PllData data;
    data.K = K;
    const std::size_t n = static_cast<std::size_t>(obs.budget);
    data.site_label.resize(n);
    data.counts.resize(n * K);

    // observed sites in (plane, raster) order
    std::vector<std::int64_t> linear;
    linear.reserve(n);
    for (int z : obs.plane_zs)
        for (int j = 0; j < spec.ny; ++j)
            for (int i = 0; i < spec.nx; ++i) linear.push_back(spec.index(i, j, z));

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long s = 0; s < static_cast<long long>(n); ++s) {
        int counts[256];
        geom::restricted_neighbor_counts(obs, volume, linear[s], counts, K);
        data.site_label[s] = volume.labels[linear[s]];
        for (int t = 0; t < K; ++t)
            data.counts[static_cast<std::size_t>(s) * K + t] = static_cast<std::uint16_t>(counts[t]);
    }
    return data;
}

namespace {

// Per-site term of the negated objective and gradient. theta layout as in
// pack_theta; grad accumulator is [f, d_alpha(K), d_triu(K(K+1)/2)] when
// used with the blocked reducer.
template <bool WithGrad>
inline void site_term(const PllData& data, const std::vector<double>& theta, std::size_t i,
                      double* acc) {
    const int K = data.K;
    const std::uint16_t* n_i = data.counts.data() + i * K;
    const int x = data.site_label[i];

    double scores[256];
    double mx = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < K; ++a) {
        double s = theta[a];
        for (int t = 0; t < K; ++t) {
            const int cnt = n_i[t];
            if (cnt != 0) s += theta[K + triu_index(K, std::min(a, t), std::max(a, t))] * cnt;
        }
        scores[a] = s;
        if (s > mx) mx = s;
    }
    double z = 0.0;
    for (int a = 0; a < K; ++a) {
        scores[a] = std::exp(scores[a] - mx);
        z += scores[a];
    }
    // negated log-likelihood term: -(score_x - logsumexp)
    const double log_p_x = std::log(scores[x] / z);
    acc[0] -= log_p_x;

    if constexpr (WithGrad) {
        for (int a = 0; a < K; ++a) {
            const double p_a = scores[a] / z;
            const double r = (a == x ? 1.0 : 0.0) - p_a;  // residual feature weight
            acc[1 + a] -= r;
            for (int t = 0; t < K; ++t) {
                const int cnt = n_i[t];
                if (cnt != 0)
                    acc[1 + K + triu_index(K, std::min(a, t), std::max(a, t))] -= r * cnt;
            }
        }
    }
}

double ridge_terms(const PllData& data, double lambda, const std::vector<double>& theta,
                   std::vector<double>* grad) {
    const int K = data.K;
    double pen = 0.0;
    for (int a = 0; a < K; ++a)
        for (int b = a; b < K; ++b) {
            const double v = theta[K + triu_index(K, a, b)];
            const double mult = (a == b) ? 1.0 : 2.0;  // ||B||_F^2 counts both off-diag copies
            pen += mult * v * v;
            if (grad) (*grad)[K + triu_index(K, a, b)] += 2.0 * mult * lambda * v;
        }
    return lambda * pen;
}

template <bool Blocked>
double objective_impl(const PllData& data, double lambda, const std::vector<double>& theta,
                      std::vector<double>* grad) {
    if (data.n_sites() == 0) throw std::invalid_argument("mple: empty observed set");
    const std::size_t np = theta_size(data.K);
    if (theta.size() != np) throw std::invalid_argument("mple: theta size mismatch");

    double f;
    if (grad) {
        std::vector<double> out(1 + np);
        auto body = [&](std::size_t i, double* acc) { site_term<true>(data, theta, i, acc); };
        if constexpr (Blocked)
            par::blocked_reduce(data.n_sites(), 1 + np, out.data(), body);
        else
            par::serial_reduce(data.n_sites(), 1 + np, out.data(), body);
        f = out[0];
        grad->assign(out.begin() + 1, out.end());
    } else {
        double out[1];
        auto body = [&](std::size_t i, double* acc) { site_term<false>(data, theta, i, acc); };
        if constexpr (Blocked)
            par::blocked_reduce(data.n_sites(), 1, out, body);
        else
            par::serial_reduce(data.n_sites(), 1, out, body);
        f = out[0];
    }
    f += ridge_terms(data, lambda, theta, grad);
    return f;
}

}  // namespace

double negated_objective(const PllData& data, double lambda, const std::vector<double>& theta,
                         std::vector<double>* grad) {
    return objective_impl<true>(data, lambda, theta, grad);
}

double negated_objective_serial(const PllData& data, double lambda,
                                const std::vector<double>& theta, std::vector<double>* grad) {
    return objective_impl<false>(data, lambda, theta, grad);
}

double pseudo_log_likelihood(const LabelVolume& volume, const geom::ObservationSet& obs,
                             const mrf::MRFParams& params) {
    const PllData data = build_pll_data(volume, obs, params.K);
    return -negated_objective(data, params.lambda, pack_theta(params), nullptr);
}

void pseudo_ll_gradient(const LabelVolume& volume, const geom::ObservationSet& obs,
                        const mrf::MRFParams& params, std::vector<double>& grad_alpha,
                        SquareMatrix& grad_B) {
    const int K = params.K;
    const PllData data = build_pll_data(volume, obs, K);
    std::vector<double> g;
    negated_objective(data, params.lambda, pack_theta(params), &g);
    grad_alpha.assign(K, 0.0);
    grad_B = SquareMatrix(K);
    for (int a = 0; a < K; ++a) grad_alpha[a] = -g[a];
    for (int a = 0; a < K; ++a)
        for (int b = a; b < K; ++b) {
            const double v = -g[K + triu_index(K, a, b)];
            grad_B.at(a, b) = v;
            grad_B.at(b, a) = v;
        }
}

namespace {

class LbfgsHistory {
public:
    explicit LbfgsHistory(int memory) : memory_(memory) {}

    void push(std::vector<double> s, std::vector<double> y, double sy) {
        if (static_cast<int>(s_.size()) == memory_) {
            s_.erase(s_.begin());
            y_.erase(y_.begin());
            sy_.erase(sy_.begin());
        }
        s_.push_back(std::move(s));
        y_.push_back(std::move(y));
        sy_.push_back(sy);
    }

    // two-loop recursion; returns approx -H * g
    std::vector<double> direction(const std::vector<double>& g) const {
        std::vector<double> q = g;
        const int m = static_cast<int>(s_.size());
        std::vector<double> a(m);
        for (int h = m - 1; h >= 0; --h) {
            a[h] = dot(s_[h], q) / sy_[h];
            axpy(q, -a[h], y_[h]);
        }
        if (m > 0) {
            const double gamma = sy_[m - 1] / dot(y_[m - 1], y_[m - 1]);
            for (double& v : q) v *= gamma;
        }
        for (int h = 0; h < m; ++h) {
            const double b = dot(y_[h], q) / sy_[h];
            axpy(q, a[h] - b, s_[h]);
        }
        for (double& v : q) v = -v;
        return q;
    }

    static double dot(const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    }
    static void axpy(std::vector<double>& x, double c, const std::vector<double>& v) {
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += c * v[i];
    }

private:
    int memory_;
    std::vector<std::vector<double>> s_, y_;
    std::vector<double> sy_;
};

double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

FitResult fit(const LabelVolume& volume, const geom::ObservationSet& obs, int K,
              const MPLEConfig& config) {
    const PllData data = build_pll_data(volume, obs, K);
    const std::size_t np = theta_size(K);
    const double lambda = config.lambda;
    // optimize the per-site average: same argmin, but objective and gradient
    // stay O(1) so the tolerance is meaningful at any observation budget
    const double inv_n = 1.0 / static_cast<double>(data.n_sites());

    auto clamp_alpha = [&](std::vector<double>& theta) {
        for (int a = 0; a < K; ++a)
            theta[a] = std::clamp(theta[a], -config.alpha_clamp, config.alpha_clamp);
    };
    auto eval = [&](const std::vector<double>& theta, std::vector<double>* grad) {
        const double f = negated_objective(data, lambda, theta, grad) * inv_n;
        if (grad)
            for (double& x : *grad) x *= inv_n;
        return f;
    };

    std::vector<double> theta(np, 0.0);
    std::vector<double> g(np);
    double f = eval(theta, &g);

    LbfgsHistory hist(config.lbfgs_memory);
    const bool use_lbfgs = config.optimizer == MPLEConfig::Optimizer::LbfgsLike;
    const double c1 = 1e-4;

    FitResult result;
    int iter = 0;
    for (; iter < config.max_iters; ++iter) {
        if (inf_norm(g) < config.grad_tolerance) {
            result.converged = true;
            break;
        }
        std::vector<double> d =
            use_lbfgs ? hist.direction(g) : [&] {
                std::vector<double> sd(g.size());
                for (std::size_t i = 0; i < g.size(); ++i) sd[i] = -g[i];
                return sd;
            }();
        double gd = LbfgsHistory::dot(g, d);
        if (!(gd < 0.0)) {  // not a descent direction; fall back to steepest
            for (std::size_t i = 0; i < np; ++i) d[i] = -g[i];
            gd = LbfgsHistory::dot(g, d);
            if (!(gd < 0.0)) break;  // zero gradient up to rounding
        }

        // backtracking line search; the accepted point never increases f,
        // including when the alpha box clamp is active
        double t = use_lbfgs ? 1.0 : 1.0 / std::max(1.0, inf_norm(g));
        bool accepted = false;
        std::vector<double> theta_new(np), g_new(np);
        double f_new = 0.0;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < np; ++i) theta_new[i] = theta[i] + t * d[i];
            clamp_alpha(theta_new);
            bool moved = false;
            double armijo = 0.0;
            for (std::size_t i = 0; i < np; ++i) {
                moved |= theta_new[i] != theta[i];
                armijo += g[i] * (theta_new[i] - theta[i]);
            }
            if (!moved) break;  // step underflowed; nothing left to gain
            f_new = eval(theta_new, &g_new);
            if (std::isfinite(f_new) && f_new <= f + c1 * std::min(0.0, armijo)) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;

        if (use_lbfgs) {
            std::vector<double> s(np), y(np);
            for (std::size_t i = 0; i < np; ++i) {
                s[i] = theta_new[i] - theta[i];
                y[i] = g_new[i] - g[i];
            }
            const double sy = LbfgsHistory::dot(s, y);
            if (sy > 1e-12) hist.push(std::move(s), std::move(y), sy);
        }
        theta = std::move(theta_new);
        g = g_new;
        f = f_new;
        theta_new.assign(np, 0.0);
    }

    result.grad_inf_norm = inf_norm(g);
    if (result.grad_inf_norm < config.grad_tolerance) result.converged = true;
    result.iterations = iter;
    result.objective = -f * static_cast<double>(data.n_sites());

    // gauge fix: subtract alpha_K so the last unary is exactly zero
    const double shift = theta[K - 1];
    for (int a = 0; a < K; ++a) theta[a] -= shift;
    result.params = unpack_theta(theta, K, lambda);
    return result;
}

namespace {
void gauge_fix(mrf::MRFParams& p) {
    const double shift = p.alpha[p.K - 1];
    for (double& a : p.alpha) a -= shift;
}
}  // namespace

RecoveryReport recovery_error(const mrf::MRFParams& est, const mrf::MRFParams& truth) {
    if (est.K != truth.K) throw std::invalid_argument("recovery_error: K mismatch");
    mrf::MRFParams e = est, t = truth;
    gauge_fix(e);
    gauge_fix(t);

    RecoveryReport r;
    const int K = e.K;
    {
        double sa = 0.0, sa2 = 0.0;
        for (int a = 0; a < K; ++a) {
            const double d = e.alpha[a] - t.alpha[a];
            sa += std::abs(d);
            sa2 += d * d;
        }
        r.mae_alpha = sa / K;
        r.rmse_alpha = std::sqrt(sa2 / K);
    }
    {
        double sb = 0.0, sb2 = 0.0;
        const int nb = K * (K + 1) / 2;
        for (int a = 0; a < K; ++a)
            for (int b = a; b < K; ++b) {
                const double d = e.B.at(a, b) - t.B.at(a, b);
                sb += std::abs(d);
                sb2 += d * d;
            }
        r.mae_B = sb / nb;
        r.rmse_B = std::sqrt(sb2 / nb);
    }
    return r;
}

std::vector<RecoveryReport> run_recovery_study(const StudyConfig& cfg,
                                               const std::vector<std::uint64_t>& seeds) {
    constexpr std::uint64_t kSerialOffsetTag = 0x7374617274;
    std::vector<RecoveryReport> rows;
    rows.reserve(seeds.size() * 3);
    for (const std::uint64_t seed : seeds) {
        const LabelVolume vol = mrf::gibbs_sample(cfg.spec, cfg.truth, cfg.sweeps, seed);

        const geom::ObservationSet full = geom::full_volume(cfg.spec);
        const int span = (cfg.planes - 1) * cfg.delta_z + 1;
        if (span > cfg.spec.nz)
            throw std::invalid_argument("run_recovery_study: serial stack exceeds volume");
        rng::Stream zs(rng::substream(seed, kSerialOffsetTag));
        const int z0 = static_cast<int>(zs.next_below(static_cast<std::uint64_t>(cfg.spec.nz - span + 1)));
        const geom::ObservationSet serial =
            geom::sample_serial_stack(cfg.spec, z0, cfg.delta_z, cfg.planes);
        const geom::ObservationSet indep =
            geom::sample_independent_planes(cfg.spec, cfg.planes, rng::substream(seed, 0x706c616e));

        for (const geom::ObservationSet* obs : {&full, &serial, &indep}) {
            const FitResult fr = fit(vol, *obs, cfg.truth.K, cfg.estimator);
            RecoveryReport r = recovery_error(fr.params, cfg.truth);
            r.geometry = obs->geometry;
            r.seed = seed;
            r.budget = obs->budget;
            rows.push_back(r);
        }
    }
    return rows;
}

}  // namespace cellstack::mple

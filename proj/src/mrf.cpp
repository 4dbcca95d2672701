#include "cellstack/mrf.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "cellstack/parallel.hpp"
#include "cellstack/rng.hpp"

namespace cellstack::mrf {

namespace {
constexpr std::uint64_t kInitTag = 0x696e6974;    // substream tag for init draws
constexpr std::uint64_t kSweepTag = 0x73776565;   // base tag for per-sweep streams
}  // namespace

MRFParams MRFParams::make(std::vector<double> alpha, SquareMatrix B, double lambda) {
    MRFParams p;
    p.K = static_cast<int>(alpha.size());
    if (p.K < 2) throw std::invalid_argument("MRFParams: need K >= 2 types");
    if (p.K > 255) throw std::invalid_argument("MRFParams: K exceeds label storage (max 255)");
    if (B.size() != p.K) throw std::invalid_argument("MRFParams: B must be K x K");
    if (lambda < 0.0) throw std::invalid_argument("MRFParams: lambda must be >= 0");
    for (double a : alpha)
        if (!std::isfinite(a)) throw std::invalid_argument("MRFParams: alpha not finite");
    for (double b : B.data())
        if (!std::isfinite(b)) throw std::invalid_argument("MRFParams: B not finite");
    if (!B.is_symmetric(1e-12)) throw std::invalid_argument("MRFParams: B must be symmetric");
    // make symmetry exact
    for (int r = 0; r < p.K; ++r)
        for (int c = r + 1; c < p.K; ++c) {
            const double v = 0.5 * (B.at(r, c) + B.at(c, r));
            B.at(r, c) = v;
            B.at(c, r) = v;
        }
    p.alpha = std::move(alpha);
    p.B = std::move(B);
    p.lambda = lambda;
    return p;
}

void conditional_from_counts(const MRFParams& params, const int* counts, double* out) {
    const int K = params.K;
    double mx = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < K; ++a) {
        double s = params.alpha[a];
        for (int t = 0; t < K; ++t) s += params.B.at(a, t) * counts[t];
        out[a] = s;
        if (s > mx) mx = s;
    }
    double z = 0.0;
    for (int a = 0; a < K; ++a) {
        out[a] = std::exp(out[a] - mx);
        z += out[a];
    }
    for (int a = 0; a < K; ++a) out[a] /= z;
}

std::vector<double> conditional_distribution(const LabelVolume& volume, Site site,
                                             const MRFParams& params) {
    const LatticeSpec& spec = volume.spec;
    if (!spec.in_bounds(site.i, site.j, site.k))
        throw std::out_of_range("conditional_distribution: site outside lattice");
    volume.validate(params.K);

    std::vector<int> counts(params.K, 0);
    for (const auto& d : neighbor_offsets(spec.neighborhood)) {
        const int i = site.i + d[0], j = site.j + d[1], k = site.k + d[2];
        if (spec.in_bounds(i, j, k)) ++counts[volume.labels[spec.index(i, j, k)]];
    }
    std::vector<double> probs(params.K);
    conditional_from_counts(params, counts.data(), probs.data());
    return probs;
}

namespace {

// Resample one site in place from its full conditional, using the uniform
// draw keyed by (sweep stream, site index).
inline void resample_site(LabelVolume& vol, const MRFParams& params, std::int64_t linear,
                          std::uint64_t sweep_seed, int* counts, double* probs) {
    const LatticeSpec& spec = vol.spec;
    const Site s = spec.site(linear);
    const int K = params.K;
    for (int t = 0; t < K; ++t) counts[t] = 0;
    for (const auto& d : neighbor_offsets(spec.neighborhood)) {
        const int i = s.i + d[0], j = s.j + d[1], k = s.k + d[2];
        if (spec.in_bounds(i, j, k)) ++counts[vol.labels[spec.index(i, j, k)]];
    }
    conditional_from_counts(params, counts, probs);
    const double u = rng::unit_double(rng::at(sweep_seed, static_cast<std::uint64_t>(linear)));
    double cum = 0.0;
    int pick = K - 1;  // guard against cum < 1 from rounding
    for (int a = 0; a < K; ++a) {
        cum += probs[a];
        if (u < cum) {
            pick = a;
            break;
        }
    }
    vol.labels[linear] = static_cast<std::uint8_t>(pick);
}

LabelVolume init_volume(const LatticeSpec& spec, const MRFParams& params, std::uint64_t seed,
                        const GibbsOptions& opts) {
    spec.validate();
    LabelVolume vol;
    vol.spec = spec;
    vol.seed = seed;
    if (opts.init == GibbsInit::Given) {
        if (!opts.given) throw std::invalid_argument("gibbs_sample: init Given without a volume");
        opts.given->validate(params.K);
        if (opts.given->spec.size() != spec.size())
            throw std::invalid_argument("gibbs_sample: given volume dims mismatch");
        vol.labels = opts.given->labels;
        return vol;
    }
    const std::int64_t n = spec.size();
    vol.labels.resize(n);
    const std::uint64_t init_seed = rng::substream(seed, kInitTag);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::int64_t v = 0; v < n; ++v) {
        rng::Stream s(rng::substream(init_seed, static_cast<std::uint64_t>(v)));
        vol.labels[v] = static_cast<std::uint8_t>(s.next_below(params.K));
    }
    return vol;
}

template <bool Parallel>
LabelVolume gibbs_impl(const LatticeSpec& spec, const MRFParams& params, int sweeps,
                       std::uint64_t seed, const GibbsOptions& opts) {
    if (sweeps < 0) throw std::invalid_argument("gibbs_sample: sweeps must be >= 0");
    LabelVolume vol = init_volume(spec, params, seed, opts);
    const std::int64_t n = spec.size();
    const int K = params.K;

    if (spec.neighborhood == Neighborhood::N26) {
        // no two-coloring under N26: sequential raster order
        std::vector<int> counts(K);
        std::vector<double> probs(K);
        for (int sw = 0; sw < sweeps; ++sw) {
            const std::uint64_t sweep_seed = rng::substream(seed, kSweepTag + static_cast<std::uint64_t>(sw));
            for (std::int64_t v = 0; v < n; ++v)
                resample_site(vol, params, v, sweep_seed, counts.data(), probs.data());
        }
        return vol;
    }

    // N6 checkerboard: sites of one parity only read the other parity, so a
    // whole color can be updated concurrently. Draws are keyed by site, so
    // the result is identical whatever the thread count.
    std::vector<std::vector<std::int64_t>> colors(2);
    for (std::int64_t v = 0; v < n; ++v) {
        const Site s = spec.site(v);
        colors[(s.i + s.j + s.k) & 1].push_back(v);
    }
    for (int sw = 0; sw < sweeps; ++sw) {
        const std::uint64_t sweep_seed = rng::substream(seed, kSweepTag + static_cast<std::uint64_t>(sw));
        for (const auto& color : colors) {
            const std::int64_t m = static_cast<std::int64_t>(color.size());
            if constexpr (Parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                for (std::int64_t idx = 0; idx < m; ++idx) {
                    int counts[256];
                    double probs[256];
                    resample_site(vol, params, color[idx], sweep_seed, counts, probs);
                }
            } else {
                std::vector<int> counts(K);
                std::vector<double> probs(K);
                for (std::int64_t idx = 0; idx < m; ++idx)
                    resample_site(vol, params, color[idx], sweep_seed, counts.data(), probs.data());
            }
        }
    }
    return vol;
}

}  // namespace

LabelVolume gibbs_sample(const LatticeSpec& spec, const MRFParams& params, int sweeps,
                         std::uint64_t seed, const GibbsOptions& opts) {
    return gibbs_impl<true>(spec, params, sweeps, seed, opts);
}

LabelVolume gibbs_sample_serial(const LatticeSpec& spec, const MRFParams& params, int sweeps,
                                std::uint64_t seed, const GibbsOptions& opts) {
    return gibbs_impl<false>(spec, params, sweeps, seed, opts);
}

double log_unnormalized_density(const LabelVolume& volume, const MRFParams& params) {
    volume.validate(params.K);
    const LatticeSpec& spec = volume.spec;
    const auto& half = positive_half_offsets(spec.neighborhood);
    double out[1];
    par::blocked_reduce(static_cast<std::size_t>(spec.size()), 1, out,
                        [&](std::size_t v, double* acc) {
                            const Site s = spec.site(static_cast<std::int64_t>(v));
                            const int a = volume.labels[v];
                            double e = params.alpha[a];
                            for (const auto& d : half) {
                                const int i = s.i + d[0], j = s.j + d[1], k = s.k + d[2];
                                if (spec.in_bounds(i, j, k))
                                    e += params.B.at(a, volume.labels[spec.index(i, j, k)]);
                            }
                            acc[0] += e;
                        });
    return out[0];
}

}  // namespace cellstack::mrf

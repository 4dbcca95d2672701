#include "cellstack/spatial_stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cellstack/parallel.hpp"
#include "cellstack/rng.hpp"
#include "cellstack/util.hpp"

namespace cellstack::stats {

namespace {
constexpr std::uint64_t kDetectTag = 0x64657463;
constexpr std::uint64_t kEnrichTag = 0x656e7269;
}  // namespace

PlanarGrid::PlanarGrid(const std::vector<double>& xs, const std::vector<double>& ys, double radius)
    : radius_(radius), inv_cell_(1.0 / radius), xs_(xs), ys_(ys) {
    if (radius <= 0.0) throw std::invalid_argument("PlanarGrid: radius must be > 0");
    for (int i = 0; i < static_cast<int>(xs_.size()); ++i) buckets_[key(xs_[i], ys_[i])].push_back(i);
}

std::uint64_t PlanarGrid::key(double x, double y) const {
    const auto gx = static_cast<std::int64_t>(std::floor(x * inv_cell_));
    const auto gy = static_cast<std::int64_t>(std::floor(y * inv_cell_));
    return (static_cast<std::uint64_t>(gx) << 32) ^ (static_cast<std::uint64_t>(gy) & 0xffffffffull);
}

std::vector<int> PlanarGrid::within_radius(int i) const {
    std::vector<int> out;
    const double r2 = radius_ * radius_;
    const auto gx = static_cast<std::int64_t>(std::floor(xs_[i] * inv_cell_));
    const auto gy = static_cast<std::int64_t>(std::floor(ys_[i] * inv_cell_));
    for (std::int64_t dx = -1; dx <= 1; ++dx)
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
            const std::uint64_t k = (static_cast<std::uint64_t>(gx + dx) << 32) ^
                                    (static_cast<std::uint64_t>(gy + dy) & 0xffffffffull);
            const auto it = buckets_.find(k);
            if (it == buckets_.end()) continue;
            for (int j : it->second) {
                if (j == i) continue;
                const double ddx = xs_[i] - xs_[j], ddy = ys_[i] - ys_[j];
                if (ddx * ddx + ddy * ddy <= r2) out.push_back(j);
            }
        }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::vector<int>> PlanarGrid::adjacency() const {
    std::vector<std::vector<int>> adj(xs_.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(xs_.size()); ++i)
        adj[i] = within_radius(static_cast<int>(i));
    return adj;
}

std::vector<double> abundance(const CellTable& table) {
    const std::size_t n = table.total_cells();
    if (n == 0) throw std::invalid_argument("abundance: no cells");
    std::vector<double> frac(table.types.size(), 0.0);
    for (const auto& sec : table.sections)
        for (const auto& c : sec.cells) frac[c.type] += 1.0;
    for (double& f : frac) f /= static_cast<double>(n);
    return frac;
}

double detectability(const CellTable& table, int type, int M, int k, int trials,
                     std::uint64_t seed) {
    const int n_sections = static_cast<int>(table.sections.size());
    if (M < 1 || M > n_sections)
        throw std::invalid_argument("detectability: need 1 <= M <= number of sections");
    if (trials < 1) throw std::invalid_argument("detectability: trials must be >= 1");

    std::vector<long long> per_section(n_sections, 0);
    for (int s = 0; s < n_sections; ++s)
        for (const auto& c : table.sections[s].cells)
            if (c.type == type) ++per_section[s];

    const std::uint64_t base = rng::substream(seed, kDetectTag);
    long long successes = 0;
    std::vector<int> idx(n_sections);
    for (int trial = 0; trial < trials; ++trial) {
        for (int s = 0; s < n_sections; ++s) idx[s] = s;
        rng::Stream rs(rng::substream(base, static_cast<std::uint64_t>(trial)));
        rng::partial_shuffle(idx.data(), idx.size(), static_cast<std::size_t>(M), rs);
        long long total = 0;
        for (int m = 0; m < M; ++m) total += per_section[idx[m]];
        if (total >= k) ++successes;
    }
    return static_cast<double>(successes) / static_cast<double>(trials);
}

namespace {

// Directed target-anchored pair counts per partner type for one labeling.
void count_pairs(const std::vector<std::vector<int>>& adj, const std::vector<int>& labels,
                 int target_type, int n_types, long long* out) {
    for (int t = 0; t < n_types; ++t) out[t] = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != target_type) continue;
        for (int j : adj[i]) ++out[labels[j]];
    }
}

template <bool Parallel>
EnrichmentRun enrichment_impl(const SectionTable& section, int n_types, int target_type,
                              double radius, int n_permutations, std::uint64_t seed) {
    if (radius <= 0.0) throw std::invalid_argument("neighborhood_enrichment: radius must be > 0");
    if (n_permutations < 1)
        throw std::invalid_argument("neighborhood_enrichment: need >= 1 permutation");

    const std::size_t n = section.cells.size();
    std::vector<double> xs(n), ys(n);
    std::vector<int> labels(n);
    bool any_target = false;
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = section.cells[i].x;
        ys[i] = section.cells[i].y;
        labels[i] = section.cells[i].type;
        any_target |= labels[i] == target_type;
    }
    EnrichmentRun run;
    if (!any_target) {
        run.no_target_cells = true;
        return run;
    }

    const PlanarGrid grid(xs, ys, radius);
    const auto adj = grid.adjacency();

    std::vector<long long> observed(n_types);
    count_pairs(adj, labels, target_type, n_types, observed.data());

    // one counter stream per permutation replicate: parallel-safe,
    // order-independent
    const std::uint64_t base = rng::substream(seed, kEnrichTag);
    std::vector<long long> perm_counts(static_cast<std::size_t>(n_permutations) * n_types);
    const auto replicate = [&](long long p) {
        std::vector<int> shuffled = labels;
        rng::Stream rs(rng::substream(base, static_cast<std::uint64_t>(p)));
        for (std::size_t i = n; i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[rs.next_below(i)]);
        count_pairs(adj, shuffled, target_type, n_types,
                    perm_counts.data() + static_cast<std::size_t>(p) * n_types);
    };
    if constexpr (Parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long long p = 0; p < n_permutations; ++p) replicate(p);
    } else {
        for (long long p = 0; p < n_permutations; ++p) replicate(p);
    }

    run.per_partner.resize(n_types);
    for (int t = 0; t < n_types; ++t) {
        double m = 0.0;
        for (int p = 0; p < n_permutations; ++p)
            m += static_cast<double>(perm_counts[static_cast<std::size_t>(p) * n_types + t]);
        m /= n_permutations;
        double var = 0.0;
        for (int p = 0; p < n_permutations; ++p) {
            const double d =
                static_cast<double>(perm_counts[static_cast<std::size_t>(p) * n_types + t]) - m;
            var += d * d;
        }
        const double sd = std::sqrt(var / n_permutations);

        EnrichmentResult& r = run.per_partner[t];
        r.target_type = target_type;
        r.partner_type = t;
        r.observed_count = observed[t];
        r.null_mean = m;
        r.null_std = sd;
        r.radius = radius;
        r.n_permutations = n_permutations;
        if (sd > 0.0) {
            r.z_score = (static_cast<double>(observed[t]) - m) / sd;
        } else {
            r.z_score = 0.0;
            r.degenerate_null = true;
        }
    }
    return run;
}

}  // namespace

EnrichmentRun neighborhood_enrichment(const SectionTable& section, int n_types, int target_type,
                                      double radius, int n_permutations, std::uint64_t seed) {
    return enrichment_impl<true>(section, n_types, target_type, radius, n_permutations, seed);
}

EnrichmentRun neighborhood_enrichment_serial(const SectionTable& section, int n_types,
                                             int target_type, double radius, int n_permutations,
                                             std::uint64_t seed) {
    return enrichment_impl<false>(section, n_types, target_type, radius, n_permutations, seed);
}

StabilityProfile section_stability_profile(const CellTable& table, int target_type, double radius,
                                           int n_permutations, std::uint64_t seed) {
    const int n_types = table.types.size();
    StabilityProfile prof;
    prof.z_by_partner.resize(n_types);

    // the same permutation stream is reused for every section so identical
    // sections yield identical z-scores
    for (const auto& sec : table.sections) {
        const EnrichmentRun run =
            neighborhood_enrichment(sec, n_types, target_type, radius, n_permutations, seed);
        if (run.no_target_cells) continue;
        prof.sections.push_back(sec.section_index);
        for (int t = 0; t < n_types; ++t) prof.z_by_partner[t].push_back(run.per_partner[t].z_score);
    }

    prof.spread_defined = prof.sections.size() >= 2;
    prof.iqr.assign(n_types, 0.0);
    prof.frac_beyond_2.assign(n_types, 0.0);
    if (prof.spread_defined) {
        for (int t = 0; t < n_types; ++t) {
            const auto& zs = prof.z_by_partner[t];
            prof.iqr[t] = percentile(zs, 75.0) - percentile(zs, 25.0);
            long long beyond = 0;
            for (double z : zs)
                if (std::abs(z) > 2.0) ++beyond;
            prof.frac_beyond_2[t] = static_cast<double>(beyond) / static_cast<double>(zs.size());
        }
    }
    return prof;
}

}  // namespace cellstack::stats

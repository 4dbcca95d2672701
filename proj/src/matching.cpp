#include "cellstack/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <tuple>

#include "cellstack/util.hpp"

namespace cellstack::match {

namespace {
constexpr double kPi = std::numbers::pi;

TypeSizeStats stats_from_areas(std::vector<double> areas) {
    TypeSizeStats s;
    s.count = areas.size();
    s.median_area = percentile(areas, 50.0);
    s.p10_area = percentile(areas, 10.0);
    s.p90_area = percentile(std::move(areas), 90.0);
    s.r_median = std::sqrt(s.median_area / kPi);
    s.r_max = std::sqrt(s.p90_area / kPi);
    return s;
}
}  // namespace

SizeStats compute_size_stats(const CellTable& table, int min_count) {
    const int n_types = table.types.size();
    std::vector<std::vector<double>> areas(n_types);
    std::vector<double> pooled;
    for (const auto& sec : table.sections)
        for (const auto& c : sec.cells) {
            if (!(c.area > 0.0)) throw std::invalid_argument("compute_size_stats: area must be > 0");
            areas[c.type].push_back(c.area);
            pooled.push_back(c.area);
        }
    if (pooled.empty()) throw std::invalid_argument("compute_size_stats: no cells");

    SizeStats out;
    out.min_count = min_count;
    out.pooled = stats_from_areas(pooled);
    out.per_type.resize(n_types);
    for (int t = 0; t < n_types; ++t) {
        if (static_cast<int>(areas[t].size()) < min_count) {
            // low-evidence type: fall back to pooled sizes
            out.per_type[t] = out.pooled;
            out.per_type[t].count = areas[t].size();
            out.per_type[t].low_confidence = true;
        } else {
            out.per_type[t] = stats_from_areas(std::move(areas[t]));
        }
    }
    return out;
}

double match_tolerance(const SizeStats& stats, int type, double delta_z, double kappa) {
    return kappa * std::max(stats.of(type).r_max, delta_z);
}

CostMatrix build_cost_matrix(const SectionTable& section_a, const SectionTable& section_b,
                             const SizeStats& stats, double delta_z, double kappa) {
    CostMatrix cm;
    cm.delta_z = delta_z;
    cm.section_a = &section_a;
    cm.section_b = &section_b;

    // group cell indices by type, ordered by id for reproducible output
    const int n_types = static_cast<int>(stats.per_type.size());
    std::vector<std::vector<int>> rows_by_type(n_types), cols_by_type(n_types);
    for (int i = 0; i < static_cast<int>(section_a.cells.size()); ++i)
        rows_by_type[section_a.cells[i].type].push_back(i);
    for (int j = 0; j < static_cast<int>(section_b.cells.size()); ++j)
        cols_by_type[section_b.cells[j].type].push_back(j);
    auto by_id = [](const SectionTable& sec) {
        return [&sec](int a, int b) { return sec.cells[a].id < sec.cells[b].id; };
    };

    for (int t = 0; t < n_types; ++t) {
        if (rows_by_type[t].empty() && cols_by_type[t].empty()) continue;
        CostMatrix::Block blk;
        blk.type = t;
        blk.tolerance = match_tolerance(stats, t, delta_z, kappa);
        blk.rows = rows_by_type[t];
        blk.cols = cols_by_type[t];
        std::sort(blk.rows.begin(), blk.rows.end(), by_id(section_a));
        std::sort(blk.cols.begin(), blk.cols.end(), by_id(section_b));

        blk.candidates.resize(blk.rows.size());
        if (!blk.cols.empty()) {
            std::vector<double> xs, ys;
            xs.reserve(blk.cols.size());
            ys.reserve(blk.cols.size());
            for (int j : blk.cols) {
                xs.push_back(section_b.cells[j].x);
                ys.push_back(section_b.cells[j].y);
            }
            // type blocks are small; direct distance checks stay exact
            for (std::size_t r = 0; r < blk.rows.size(); ++r) {
                const CellRecord& a = section_a.cells[blk.rows[r]];
                for (std::size_t c = 0; c < blk.cols.size(); ++c) {
                    const double d = std::hypot(a.x - xs[c], a.y - ys[c]);
                    if (d <= blk.tolerance)
                        blk.candidates[r].push_back({static_cast<int>(c), d});
                }
            }
        }
        cm.blocks.push_back(std::move(blk));
    }
    return cm;
}

double hungarian(const std::vector<std::vector<double>>& cost, std::vector<int>& row_to_col) {
    // shortest augmenting path formulation with row/column potentials
    const int n = static_cast<int>(cost.size());
    row_to_col.assign(n, -1);
    if (n == 0) return 0.0;
    const double inf = std::numeric_limits<double>::infinity();

    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    double total = 0.0;
    for (int j = 1; j <= n; ++j)
        if (p[j] != 0) {
            row_to_col[p[j] - 1] = j - 1;
            total += cost[p[j] - 1][j - 1];
        }
    return total;
}

MatchResult solve_assignment(const CostMatrix& costs) {
    MatchResult res;
    res.delta_z = costs.delta_z;

    for (const auto& blk : costs.blocks) {
        const int na = static_cast<int>(blk.rows.size());
        const int nb = static_cast<int>(blk.cols.size());
        if (na == 0 || nb == 0) {
            for (int r : blk.rows) {
                res.unmatched_a.push_back(costs.section_a->cells[r].id);
                res.total_objective += blk.tolerance;
            }
            for (int c : blk.cols) {
                res.unmatched_b.push_back(costs.section_b->cells[c].id);
                res.total_objective += blk.tolerance;
            }
            continue;
        }

        // square augmented matrix: real pairs, then per-cell dummy slots
        // whose diagonal carries the unmatched penalty
        const int n = na + nb;
        // any infeasible entry must exceed the all-dummy assignment cost
        const double big = 10.0 * (blk.tolerance + 1.0) * n + 1e6;
        std::vector<std::vector<double>> m(n, std::vector<double>(n, big));
        for (int r = 0; r < na; ++r)
            for (const auto& [c, d] : blk.candidates[r]) m[r][c] = d;
        for (int r = 0; r < na; ++r) m[r][nb + r] = blk.tolerance;  // A unmatched
        for (int c = 0; c < nb; ++c) m[na + c][c] = blk.tolerance;  // B unmatched
        for (int r = na; r < n; ++r)
            for (int c = nb; c < n; ++c) m[r][c] = 0.0;  // dummy-dummy

        std::vector<int> row_to_col;
        hungarian(m, row_to_col);

        for (int r = 0; r < na; ++r) {
            const int c = row_to_col[r];
            if (c < nb) {
                MatchResult::Pair pr;
                pr.index_a = blk.rows[r];
                pr.index_b = blk.cols[c];
                pr.id_a = costs.section_a->cells[pr.index_a].id;
                pr.id_b = costs.section_b->cells[pr.index_b].id;
                pr.cost = m[r][c];
                res.total_objective += pr.cost;
                res.pairs.push_back(std::move(pr));
            } else {
                res.unmatched_a.push_back(costs.section_a->cells[blk.rows[r]].id);
                res.total_objective += blk.tolerance;
            }
        }
        std::vector<char> col_matched(nb, 0);
        for (int r = 0; r < na; ++r)
            if (row_to_col[r] < nb) col_matched[row_to_col[r]] = 1;
        for (int c = 0; c < nb; ++c)
            if (!col_matched[c]) {
                res.unmatched_b.push_back(costs.section_b->cells[blk.cols[c]].id);
                res.total_objective += blk.tolerance;
            }
    }

    auto pair_key = [](const MatchResult::Pair& p) { return std::tie(p.cost, p.id_a, p.id_b); };
    std::sort(res.pairs.begin(), res.pairs.end(),
              [&](const auto& a, const auto& b) { return pair_key(a) < pair_key(b); });
    std::sort(res.unmatched_a.begin(), res.unmatched_a.end());
    std::sort(res.unmatched_b.begin(), res.unmatched_b.end());
    return res;
}

namespace {

// Splits any chain longer than the plausible extent at its largest-cost
// link, recursively.
void split_overlong(CellChain chain, int max_len, std::vector<CellChain>& out) {
    if (static_cast<int>(chain.cells.size()) <= max_len) {
        out.push_back(std::move(chain));
        return;
    }
    std::size_t weakest = 0;
    for (std::size_t l = 1; l < chain.link_costs.size(); ++l)
        if (chain.link_costs[l] > chain.link_costs[weakest]) weakest = l;

    CellChain left, right;
    left.type = right.type = chain.type;
    left.split_flagged = right.split_flagged = true;
    left.cells.assign(chain.cells.begin(), chain.cells.begin() + weakest + 1);
    left.link_costs.assign(chain.link_costs.begin(), chain.link_costs.begin() + weakest);
    right.cells.assign(chain.cells.begin() + weakest + 1, chain.cells.end());
    right.link_costs.assign(chain.link_costs.begin() + weakest + 1, chain.link_costs.end());
    split_overlong(std::move(left), max_len, out);
    split_overlong(std::move(right), max_len, out);
}

}  // namespace

std::vector<CellChain> link_chains(const CellTable& table, const SizeStats& stats, double delta_z,
                                   double kappa) {
    const auto& sections = table.sections;
    const int n_sections = static_cast<int>(sections.size());

    // flat indexing across sections for union-find
    std::vector<std::size_t> offset(n_sections + 1, 0);
    for (int s = 0; s < n_sections; ++s) offset[s + 1] = offset[s] + sections[s].cells.size();
    const std::size_t total = offset[n_sections];

    // adjacent-pair matchings are independent; run them in parallel
    std::vector<MatchResult> matches(std::max(0, n_sections - 1));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int s = 0; s < n_sections - 1; ++s) {
        const CostMatrix cm =
            build_cost_matrix(sections[s], sections[s + 1], stats, delta_z, kappa);
        matches[s] = solve_assignment(cm);
    }

    UnionFind uf(total);
    std::map<std::pair<std::size_t, std::size_t>, double> link_cost;
    for (int s = 0; s < n_sections - 1; ++s)
        for (const auto& pr : matches[s].pairs) {
            const std::size_t a = offset[s] + pr.index_a;
            const std::size_t b = offset[s + 1] + pr.index_b;
            uf.unite(a, b);
            link_cost[{a, b}] = pr.cost;
        }

    // gather components; members arrive in section order because flat
    // indices increase with section
    std::map<std::size_t, std::vector<std::size_t>> comps;
    for (std::size_t g = 0; g < total; ++g) comps[uf.find(g)].push_back(g);

    auto record_of = [&](std::size_t g) -> const CellRecord& {
        const int s = static_cast<int>(std::upper_bound(offset.begin(), offset.end(), g) -
                                       offset.begin()) - 1;
        return sections[s].cells[g - offset[s]];
    };

    std::vector<CellChain> chains;
    chains.reserve(comps.size());
    for (auto& [root, members] : comps) {
        CellChain ch;
        ch.type = record_of(members.front()).type;
        for (std::size_t m = 0; m < members.size(); ++m) {
            ch.cells.push_back(record_of(members[m]));
            if (m > 0) ch.link_costs.push_back(link_cost.at({members[m - 1], members[m]}));
        }
        const double r_max = stats.of(ch.type).r_max;
        const int max_len =
            static_cast<int>(std::ceil(2.0 * r_max / delta_z)) + 1;
        split_overlong(std::move(ch), std::max(1, max_len), chains);
    }
    return chains;
}

Point3D estimate_centroid(const CellChain& chain, const SizeStats& stats, double delta_z) {
    (void)stats;
    if (chain.cells.empty()) throw std::invalid_argument("estimate_centroid: empty chain");
    for (const auto& c : chain.cells)
        if (!(c.area > 0.0)) throw std::invalid_argument("estimate_centroid: area must be > 0");

    Point3D p;
    p.cell_id = chain.cells.front().id;
    p.type = chain.type;
    p.chain_len = static_cast<int>(chain.cells.size());

    if (chain.cells.size() == 1) {
        const CellRecord& c = chain.cells.front();
        p.provenance = Point3D::Provenance::LC;
        p.x = c.x;
        p.y = c.y;
        p.z = c.z;  // depth bounded between the neighboring section planes
        p.z_lo = c.z - 0.5 * delta_z;
        p.z_hi = c.z + 0.5 * delta_z;
        return p;
    }

    p.provenance = Point3D::Provenance::SC;
    double wsum = 0.0, xw = 0.0, yw = 0.0;
    double zmin = chain.cells.front().z, zmax = chain.cells.front().z;
    for (const auto& c : chain.cells) {
        wsum += c.area;
        xw += c.area * c.x;
        yw += c.area * c.y;
        zmin = std::min(zmin, c.z);
        zmax = std::max(zmax, c.z);
    }
    p.x = xw / wsum;
    p.y = yw / wsum;
    p.z_lo = zmin - 0.5 * delta_z;
    p.z_hi = zmax + 0.5 * delta_z;

    // sphere model: r_m^2 = R^2 - (z_m - z_c)^2. With y_m = r_m^2 + z_m^2
    // this is the line y_m = u + v z_m where z_c = v / 2; solve by least
    // squares (exact interpolation for two sections).
    const std::size_t m = chain.cells.size();
    double sz = 0.0, szz = 0.0, sy = 0.0, szy = 0.0;
    for (const auto& c : chain.cells) {
        const double r2 = c.area / kPi;
        const double ym = r2 + c.z * c.z;
        sz += c.z;
        szz += c.z * c.z;
        sy += ym;
        szy += c.z * ym;
    }
    const double denom = m * szz - sz * sz;  // > 0: members sit on distinct planes
    const double v = (m * szy - sz * sy) / denom;
    const double zc = 0.5 * v;

    p.z = zc;
    if (p.z < p.z_lo || p.z > p.z_hi) {
        p.z = std::clamp(p.z, p.z_lo, p.z_hi);
        p.depth_clamped = true;
    }
    return p;
}

Reconstruction reconstruct(const CellTable& table, const SizeStats& stats, double delta_z,
                           double kappa) {
    Reconstruction rec;
    rec.chains = link_chains(table, stats, delta_z, kappa);
    rec.points.reserve(rec.chains.size());
    for (const auto& ch : rec.chains) rec.points.push_back(estimate_centroid(ch, stats, delta_z));
    return rec;
}

}  // namespace cellstack::match

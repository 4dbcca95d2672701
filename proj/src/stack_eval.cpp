#include "cellstack/stack_eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "cellstack/rng.hpp"
#include "cellstack/util.hpp"

namespace cellstack::stackeval {

namespace {
constexpr double kPi = std::numbers::pi;

// coarse 3D hash grid for the overlap-rejection step
class SphereGrid {
public:
    explicit SphereGrid(double cell) : cell_(cell) {}
    void insert(double x, double y, double z, double r, int idx) {
        pts_.push_back({x, y, z, r, idx});
        grid_[key(x, y, z)].push_back(static_cast<int>(pts_.size()) - 1);
    }
    bool too_close(double x, double y, double z, double r, double gap_factor) const {
        const auto gx = cidx(x), gy = cidx(y), gz = cidx(z);
        for (std::int64_t dx = -2; dx <= 2; ++dx)
            for (std::int64_t dy = -2; dy <= 2; ++dy)
                for (std::int64_t dz = -2; dz <= 2; ++dz) {
                    const auto it = grid_.find(pack(gx + dx, gy + dy, gz + dz));
                    if (it == grid_.end()) continue;
                    for (int p : it->second) {
                        const auto& q = pts_[p];
                        const double min_d = gap_factor * (r + q.r);
                        const double ddx = x - q.x, ddy = y - q.y, ddz = z - q.z;
                        if (ddx * ddx + ddy * ddy + ddz * ddz < min_d * min_d) return true;
                    }
                }
        return false;
    }

private:
    struct P {
        double x, y, z, r;
        int idx;
    };
    double cell_;
    std::vector<P> pts_;
    std::unordered_map<std::uint64_t, std::vector<int>> grid_;
    std::int64_t cidx(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }
    static std::uint64_t pack(std::int64_t a, std::int64_t b, std::int64_t c) {
        return (static_cast<std::uint64_t>(a) << 42) ^ (static_cast<std::uint64_t>(b) << 21) ^
               static_cast<std::uint64_t>(c & 0x1fffff);
    }
    std::uint64_t key(double x, double y, double z) const { return pack(cidx(x), cidx(y), cidx(z)); }
};

}  // namespace

std::vector<long long> ReferenceStack::observed_ids() const {
    std::set<long long> ids;
    for (const auto& sec : table.sections)
        for (const auto& c : sec.cells) ids.insert(c.true_id);
    return {ids.begin(), ids.end()};
}

ReferenceStack synth_sphere_stack(const SphereStackConfig& cfg, std::uint64_t seed) {
    if (cfg.types.empty()) throw std::invalid_argument("synth_sphere_stack: need >= 1 type");
    if (cfg.base_dz <= 0.0) throw std::invalid_argument("synth_sphere_stack: base_dz must be > 0");

    ReferenceStack ref;
    ref.base_dz = cfg.base_dz;
    for (const auto& t : cfg.types) ref.table.types.intern(t.name);

    double max_r = 0.0;
    for (const auto& t : cfg.types) max_r = std::max(max_r, t.r_max);

    rng::Stream rs(rng::substream(seed, 0x737068));
    SphereGrid grid(2.0 * max_r + 1.0);

    for (int c = 0; c < cfg.n_cells; ++c) {
        const int type = static_cast<int>(rs.next_below(cfg.types.size()));
        const auto& td = cfg.types[type];
        const double r = rs.next_in(td.r_min, td.r_max);
        const double margin = cfg.keep_fully_inside ? r : 0.0;
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_attempts_per_cell; ++attempt) {
            const double x = rs.next_in(margin, cfg.lx - margin);
            const double y = rs.next_in(margin, cfg.ly - margin);
            const double z = rs.next_in(margin, cfg.lz - margin);
            if (grid.too_close(x, y, z, r, cfg.min_gap_factor)) continue;
            grid.insert(x, y, z, r, c);
            ref.cells.push_back({static_cast<long long>(ref.cells.size()), type, x, y, z, r});
            placed = true;
            break;
        }
        if (!placed) continue;  // volume saturated for this draw; skip
    }

    // slice: planes at z = base_dz * m, m = 0 .. floor(lz / base_dz)
    const int n_planes = static_cast<int>(std::floor(cfg.lz / cfg.base_dz)) + 1;
    std::vector<SectionTable> sections(n_planes);
    for (int m = 0; m < n_planes; ++m) {
        sections[m].section_index = m;
        sections[m].z = cfg.base_dz * m;
    }
    for (const auto& cell : ref.cells) {
        for (int m = 0; m < n_planes; ++m) {
            const double dz = sections[m].z - cell.z;
            const double r2 = cell.radius * cell.radius - dz * dz;
            if (r2 <= 0.0) continue;
            CellRecord rec;
            rec.id = "v" + std::to_string(cell.id) + "s" + std::to_string(m);
            rec.x = cell.x;
            rec.y = cell.y;
            rec.z = sections[m].z;
            rec.area = kPi * r2;
            rec.type = cell.type;
            rec.section = m;
            rec.true_id = cell.id;
            sections[m].cells.push_back(std::move(rec));
        }
    }
    ref.table.sections = std::move(sections);
    return ref;
}

namespace {
int spacing_step(const ReferenceStack& ref, double delta_z) {
    const double ratio = delta_z / ref.base_dz;
    const int step = static_cast<int>(std::lround(ratio));
    if (step < 1 || std::abs(ratio - step) > 1e-9)
        throw std::invalid_argument("delta_z must be a positive multiple of the base spacing");
    return step;
}
}  // namespace

CellTable subsample_stack(const ReferenceStack& ref, double delta_z, int offset) {
    const int step = spacing_step(ref, delta_z);
    if (offset < 0 || offset >= step)
        throw std::invalid_argument("subsample_stack: offset must be in [0, step)");
    CellTable out;
    out.types = ref.table.types;
    int new_index = 0;
    for (const auto& sec : ref.table.sections) {
        if (sec.section_index % step != offset) continue;
        SectionTable s = sec;
        s.section_index = new_index;
        for (auto& c : s.cells) c.section = new_index;
        ++new_index;
        out.sections.push_back(std::move(s));
    }
    return out;
}

std::vector<int> all_offsets(const ReferenceStack& ref, double delta_z) {
    const int step = spacing_step(ref, delta_z);
    std::vector<int> out(step);
    for (int o = 0; o < step; ++o) out[o] = o;
    return out;
}

namespace {

CoverageReport score_offset(const ReferenceStack& ref, double delta_z, int offset,
                            const EvalConfig& cfg, long long total_ids) {
    CoverageReport rep;
    rep.delta_z = delta_z;
    rep.offset = offset;

    const CellTable sub = subsample_stack(ref, delta_z, offset);
    rep.n_cross_sections = sub.total_cells();
    if (rep.n_cross_sections == 0) {
        rep.missed_unique = total_ids;
        rep.missed_frac = 1.0;
        return rep;
    }

    const match::SizeStats stats = match::compute_size_stats(sub, cfg.min_count);
    const match::Reconstruction rec = match::reconstruct(sub, stats, delta_z, cfg.kappa);
    rep.n_chains = rec.chains.size();

    // SC/LC composition over sampled cross-sections
    std::size_t sc_cells = 0;
    for (const auto& ch : rec.chains)
        if (ch.is_shared()) sc_cells += ch.cells.size();
    rep.sc_fraction = static_cast<double>(sc_cells) / static_cast<double>(rep.n_cross_sections);
    rep.lc_fraction = 1.0 - rep.sc_fraction;

    // unique-id coverage of the sampled planes
    std::set<long long> captured;
    for (const auto& sec : sub.sections)
        for (const auto& c : sec.cells) captured.insert(c.true_id);
    rep.captured_unique = static_cast<long long>(captured.size());
    rep.missed_unique = total_ids - rep.captured_unique;
    rep.captured_frac = static_cast<double>(rep.captured_unique) / static_cast<double>(total_ids);
    rep.missed_frac = 1.0 - rep.captured_frac;

    // localization: attribute each chain to its majority true id (ties to
    // the largest-area member); chains spanning several ids are link errors
    std::unordered_map<long long, const TrueCell*> by_id;
    for (const auto& tc : ref.cells) by_id[tc.id] = &tc;

    for (std::size_t ci = 0; ci < rec.chains.size(); ++ci) {
        const auto& ch = rec.chains[ci];
        std::map<long long, int> votes;
        for (const auto& c : ch.cells) ++votes[c.true_id];
        if (votes.size() > 1) ++rep.link_errors;
        long long best_id = -1;
        int best_votes = -1;
        for (const auto& [id, v] : votes)
            if (v > best_votes) {
                best_votes = v;
                best_id = id;
            }
        // tie-break toward the id of the largest-area member
        double best_area = -1.0;
        for (const auto& c : ch.cells)
            if (votes[c.true_id] == best_votes && c.area > best_area) {
                best_area = c.area;
                best_id = c.true_id;
            }
        const TrueCell* truth = by_id.at(best_id);
        const auto& pt = rec.points[ci];
        const double dx = pt.x - truth->x, dy = pt.y - truth->y, dz = pt.z - truth->z;
        rep.loc_errors.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
    }
    if (!rep.loc_errors.empty()) {
        rep.loc_mean = mean(rep.loc_errors);
        rep.loc_std = stddev_pop(rep.loc_errors);
        rep.loc_p50 = percentile(rep.loc_errors, 50.0);
        rep.loc_p90 = percentile(rep.loc_errors, 90.0);
    }
    return rep;
}

}  // namespace

std::vector<CoverageReport> evaluate(const ReferenceStack& ref, double delta_z,
                                     const std::vector<int>& offsets, const EvalConfig& cfg) {
    if (offsets.empty()) throw std::invalid_argument("evaluate: need >= 1 offset");
    const long long total_ids = static_cast<long long>(ref.observed_ids().size());
    if (total_ids == 0) throw std::invalid_argument("evaluate: reference has no cross-sections");

    std::vector<CoverageReport> reports(offsets.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long long i = 0; i < static_cast<long long>(offsets.size()); ++i)
        reports[i] = score_offset(ref, delta_z, offsets[i], cfg, total_ids);

    // pooled row: cross-section-weighted composition, id counts summed over
    // offsets (each offset is its own acquisition), errors concatenated
    CoverageReport pooled;
    pooled.delta_z = delta_z;
    pooled.offset = -1;
    std::size_t total_cs = 0;
    long long cap = 0, miss = 0;
    double sc_cells = 0.0;
    for (const auto& r : reports) {
        total_cs += r.n_cross_sections;
        sc_cells += r.sc_fraction * static_cast<double>(r.n_cross_sections);
        cap += r.captured_unique;
        miss += r.missed_unique;
        pooled.link_errors += r.link_errors;
        pooled.n_chains += r.n_chains;
        pooled.loc_errors.insert(pooled.loc_errors.end(), r.loc_errors.begin(),
                                 r.loc_errors.end());
    }
    pooled.n_cross_sections = total_cs;
    pooled.sc_fraction = total_cs ? sc_cells / static_cast<double>(total_cs) : 0.0;
    pooled.lc_fraction = total_cs ? 1.0 - pooled.sc_fraction : 0.0;
    pooled.captured_unique = cap;
    pooled.missed_unique = miss;
    pooled.captured_frac = static_cast<double>(cap) / static_cast<double>(cap + miss);
    pooled.missed_frac = 1.0 - pooled.captured_frac;
    if (!pooled.loc_errors.empty()) {
        pooled.loc_mean = mean(pooled.loc_errors);
        pooled.loc_std = stddev_pop(pooled.loc_errors);
        pooled.loc_p50 = percentile(pooled.loc_errors, 50.0);
        pooled.loc_p90 = percentile(pooled.loc_errors, 90.0);
    }
    reports.push_back(std::move(pooled));
    return reports;
}

}  // namespace cellstack::stackeval

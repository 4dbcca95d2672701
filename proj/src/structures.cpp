#include "cellstack/structures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "cellstack/util.hpp"

namespace cellstack::structure {

namespace {

// leading eigenvector of a symmetric 3x3 matrix via cyclic Jacobi sweeps
std::array<double, 3> principal_axis(double cov[3][3]) {
    double a[3][3];
    double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a[r][c] = cov[r][c];

    for (int sweep = 0; sweep < 50; ++sweep) {
        double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
        if (off < 1e-15) break;
        for (int p = 0; p < 2; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(a[p][q]) < 1e-18) continue;
                const double theta = 0.5 * std::atan2(2.0 * a[p][q], a[q][q] - a[p][p]);
                const double c = std::cos(theta), s = std::sin(theta);
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < 3; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
    }
    int best = 0;
    for (int d = 1; d < 3; ++d)
        if (a[d][d] > a[best][best]) best = d;
    std::array<double, 3> axis = {v[0][best], v[1][best], v[2][best]};
    const double norm = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    for (double& x : axis) x /= norm;
    return axis;
}

struct Grid3 {
    double cell;
    std::unordered_map<std::uint64_t, std::vector<int>> buckets;
    std::vector<std::array<double, 3>> pts;

    explicit Grid3(double c) : cell(c) {}
    static std::uint64_t pack(std::int64_t a, std::int64_t b, std::int64_t c) {
        return (static_cast<std::uint64_t>(a) << 42) ^ (static_cast<std::uint64_t>(b) << 21) ^
               static_cast<std::uint64_t>(c & 0x1fffff);
    }
    std::int64_t ci(double x) const { return static_cast<std::int64_t>(std::floor(x / cell)); }
    void insert(const std::array<double, 3>& p) {
        pts.push_back(p);
        buckets[pack(ci(p[0]), ci(p[1]), ci(p[2]))].push_back(static_cast<int>(pts.size()) - 1);
    }
    template <typename Fn>
    void for_each_within(int i, double r, Fn&& fn) const {
        const auto& p = pts[i];
        const double r2 = r * r;
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    const auto it =
                        buckets.find(pack(ci(p[0]) + dx, ci(p[1]) + dy, ci(p[2]) + dz));
                    if (it == buckets.end()) continue;
                    for (int j : it->second) {
                        if (j <= i) continue;
                        const auto& q = pts[j];
                        const double ddx = p[0] - q[0], ddy = p[1] - q[1], ddz = p[2] - q[2];
                        if (ddx * ddx + ddy * ddy + ddz * ddz <= r2) fn(j);
                    }
                }
    }
};

}  // namespace

std::vector<Structure3D> build_structures(const std::vector<match::Point3D>& cloud,
                                          int type_filter, double link_radius) {
    if (link_radius <= 0.0) throw std::invalid_argument("build_structures: link_radius must be > 0");

    std::vector<int> members;
    for (int i = 0; i < static_cast<int>(cloud.size()); ++i)
        if (cloud[i].type == type_filter) members.push_back(i);

    Grid3 grid(link_radius);
    for (int m : members) grid.insert({cloud[m].x, cloud[m].y, cloud[m].z});

    UnionFind uf(members.size());
    for (int i = 0; i < static_cast<int>(members.size()); ++i)
        grid.for_each_within(i, link_radius, [&](int j) { uf.unite(i, j); });

    std::map<std::size_t, std::vector<int>> comps;
    for (std::size_t i = 0; i < members.size(); ++i) comps[uf.find(i)].push_back(members[i]);

    std::vector<Structure3D> out;
    out.reserve(comps.size());
    int next_id = 0;
    for (auto& [root, comp] : comps) {
        Structure3D st;
        st.structure_id = next_id++;
        st.members = comp;

        double cx = 0.0, cy = 0.0, cz = 0.0;
        for (int m : comp) {
            cx += cloud[m].x;
            cy += cloud[m].y;
            cz += cloud[m].z;
        }
        const double n = static_cast<double>(comp.size());
        cx /= n;
        cy /= n;
        cz /= n;
        st.origin = {cx, cy, cz};

        double cov[3][3] = {};
        for (int m : comp) {
            const double d[3] = {cloud[m].x - cx, cloud[m].y - cy, cloud[m].z - cz};
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) cov[r][c] += d[r] * d[c] / n;
        }
        st.axis = principal_axis(cov);

        // orient the axis by the first-to-last member displacement so the
        // direction transforms covariantly with the cloud
        const auto& f = cloud[comp.front()];
        const auto& l = cloud[comp.back()];
        const double dir = st.axis[0] * (l.x - f.x) + st.axis[1] * (l.y - f.y) +
                           st.axis[2] * (l.z - f.z);
        if (dir < 0.0)
            for (double& x : st.axis) x = -x;
        else if (dir == 0.0) {
            int big = 0;
            for (int d = 1; d < 3; ++d)
                if (std::abs(st.axis[d]) > std::abs(st.axis[big])) big = d;
            if (st.axis[big] < 0.0)
                for (double& x : st.axis) x = -x;
        }

        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int m : comp) {
            const double t = st.axis[0] * (cloud[m].x - cx) + st.axis[1] * (cloud[m].y - cy) +
                             st.axis[2] * (cloud[m].z - cz);
            lo = std::min(lo, t);
            hi = std::max(hi, t);
        }
        st.extent = hi - lo;
        out.push_back(std::move(st));
    }
    return out;
}

int count_planar_components(const SectionTable& section, int type_filter, double link_radius) {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(section.cells.size()); ++i)
        if (section.cells[i].type == type_filter) idx.push_back(i);
    if (idx.empty()) return 0;
    UnionFind uf(idx.size());
    const double r2 = link_radius * link_radius;
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
            const auto& ca = section.cells[idx[a]];
            const auto& cb = section.cells[idx[b]];
            const double dx = ca.x - cb.x, dy = ca.y - cb.y;
            if (dx * dx + dy * dy <= r2) uf.unite(a, b);
        }
    std::unordered_set<std::size_t> roots;
    for (std::size_t a = 0; a < idx.size(); ++a) roots.insert(uf.find(a));
    return static_cast<int>(roots.size());
}

DistanceComparison compare_distances(const CellTable& sections, int source_type,
                                     const TargetSpec& target) {
    DistanceComparison cmp;
    cmp.description = target.description;

    // collect target cross-sections: by explicit id set or by type
    std::unordered_set<std::string> id_set(target.ids.begin(), target.ids.end());
    const bool by_ids = !id_set.empty();

    struct T {
        double x, y, z;
        int section;
        const std::string* id;
    };
    std::vector<T> targets;
    for (const auto& sec : sections.sections)
        for (const auto& c : sec.cells) {
            const bool is_target = by_ids ? id_set.count(c.id) > 0 : c.type == target.type;
            if (is_target) targets.push_back({c.x, c.y, c.z, sec.section_index, &c.id});
        }
    if (targets.empty())
        throw std::invalid_argument("compare_distances: no target cells present");

    bool any_source = false;
    double sum2d = 0.0, sum3d = 0.0;
    for (const auto& sec : sections.sections)
        for (const auto& c : sec.cells) {
            if (c.type != source_type) continue;
            any_source = true;
            DistancePair pr;
            pr.cell_id = c.id;
            pr.section = sec.section_index;

            double best2d = std::numeric_limits<double>::infinity();
            double best3d = best2d;
            for (const auto& t : targets) {
                if (*t.id == c.id) continue;  // self
                const double dx = c.x - t.x, dy = c.y - t.y, dz = c.z - t.z;
                const double d3 = std::sqrt(dx * dx + dy * dy + dz * dz);
                best3d = std::min(best3d, d3);
                if (t.section == sec.section_index)
                    best2d = std::min(best2d, std::sqrt(dx * dx + dy * dy));
            }
            if (!std::isfinite(best3d)) continue;  // sole cell was itself
            pr.d3d = best3d;
            pr.d2d_defined = std::isfinite(best2d);
            pr.d2d = pr.d2d_defined ? best2d : 0.0;
            if (pr.d2d_defined) {
                sum2d += pr.d2d;
                sum3d += pr.d3d;
                ++cmp.n_both;
            }
            cmp.per_cell.push_back(std::move(pr));
        }
    if (!any_source) throw std::invalid_argument("compare_distances: no source cells present");
    if (cmp.n_both > 0) {
        cmp.mean_d2d = sum2d / static_cast<double>(cmp.n_both);
        cmp.mean_d3d = sum3d / static_cast<double>(cmp.n_both);
    }
    return cmp;
}

std::vector<ProfileBin> along_structure_profile(const Structure3D& structure,
                                                const std::vector<match::Point3D>& cloud,
                                                int n_types, double band_radius, int bins,
                                                ProfileValue value) {
    if (structure.members.size() < 3)
        throw std::invalid_argument("along_structure_profile: structure needs >= 3 members");
    if (bins < 2) throw std::invalid_argument("along_structure_profile: bins must be >= 2");
    if (band_radius <= 0.0)
        throw std::invalid_argument("along_structure_profile: band_radius must be > 0");

    // arc-length origin: smallest member projection
    double lo = std::numeric_limits<double>::infinity();
    for (int m : structure.members) {
        const double t = structure.axis[0] * (cloud[m].x - structure.origin[0]) +
                         structure.axis[1] * (cloud[m].y - structure.origin[1]) +
                         structure.axis[2] * (cloud[m].z - structure.origin[2]);
        lo = std::min(lo, t);
    }
    const double extent = structure.extent;
    if (!(extent > 0.0))
        throw std::invalid_argument("along_structure_profile: degenerate structure extent");

    std::vector<ProfileBin> out(bins);
    const double bin_len = extent / bins;
    std::vector<std::vector<long long>> counts(bins, std::vector<long long>(n_types, 0));
    for (int b = 0; b < bins; ++b) out[b].arc_coord = (b + 0.5) * bin_len;

    for (const auto& p : cloud) {
        const double dx = p.x - structure.origin[0];
        const double dy = p.y - structure.origin[1];
        const double dz = p.z - structure.origin[2];
        const double t = structure.axis[0] * dx + structure.axis[1] * dy + structure.axis[2] * dz;
        const double arc = t - lo;
        if (arc < 0.0 || arc > extent) continue;
        // perpendicular distance to the axis line
        const double px = dx - t * structure.axis[0];
        const double py = dy - t * structure.axis[1];
        const double pz = dz - t * structure.axis[2];
        if (px * px + py * py + pz * pz > band_radius * band_radius) continue;
        const int b = std::min(bins - 1, static_cast<int>(arc / bin_len));
        ++counts[b][p.type];
        ++out[b].count;
    }

    for (int b = 0; b < bins; ++b) {
        out[b].value.assign(n_types, 0.0);
        if (value == ProfileValue::Composition) {
            if (out[b].count > 0)
                for (int t = 0; t < n_types; ++t)
                    out[b].value[t] =
                        static_cast<double>(counts[b][t]) / static_cast<double>(out[b].count);
        } else {
            for (int t = 0; t < n_types; ++t)
                out[b].value[t] = static_cast<double>(counts[b][t]) / bin_len;
        }
    }
    return out;
}

}  // namespace cellstack::structure

#include "cellstack/geometry.hpp"

#include <algorithm>
#include <stdexcept>

#include "cellstack/rng.hpp"

namespace cellstack::geom {

std::string to_string(Geometry g) {
    switch (g) {
        case Geometry::Independent2D: return "independent2d";
        case Geometry::Serial3D: return "serial3d";
        case Geometry::FullVolume: return "full";
    }
    return "full";
}

Geometry geometry_from_string(const std::string& s) {
    if (s == "independent2d" || s == "Independent2D") return Geometry::Independent2D;
    if (s == "serial3d" || s == "Serial3D") return Geometry::Serial3D;
    if (s == "full" || s == "FullVolume") return Geometry::FullVolume;
    throw std::invalid_argument("unknown geometry: " + s);
}

std::vector<Site> ObservationSet::observed_sites(const LatticeSpec& spec) const {
    std::vector<Site> out;
    out.reserve(static_cast<std::size_t>(budget));
    for (int z : plane_zs)
        for (int j = 0; j < spec.ny; ++j)
            for (int i = 0; i < spec.nx; ++i) out.push_back({i, j, z});
    return out;
}

namespace {

ObservationSet from_planes(const LatticeSpec& spec, Geometry g, std::vector<int> planes,
                           int delta_z, std::uint64_t seed) {
    std::sort(planes.begin(), planes.end());
    ObservationSet obs;
    obs.geometry = g;
    obs.plane_zs = std::move(planes);
    obs.delta_z = delta_z;
    obs.seed = seed;
    obs.plane_mask.assign(spec.nz, 0);
    for (int z : obs.plane_zs) {
        if (z < 0 || z >= spec.nz) throw std::invalid_argument("plane index outside volume");
        obs.plane_mask[z] = 1;
    }
    obs.budget = static_cast<std::int64_t>(obs.plane_zs.size()) * spec.nx * spec.ny;
    return obs;
}

}  // namespace

ObservationSet full_volume(const LatticeSpec& spec) {
    spec.validate();
    std::vector<int> planes(spec.nz);
    for (int z = 0; z < spec.nz; ++z) planes[z] = z;
    return from_planes(spec, Geometry::FullVolume, std::move(planes), 0, 0);
}

ObservationSet sample_independent_planes(const LatticeSpec& spec, int M, std::uint64_t seed) {
    spec.validate();
    if (M < 1 || M > spec.nz)
        throw std::invalid_argument("sample_independent_planes: need 1 <= M <= nz");
    // one plane per equal depth bin; bins [floor(b*nz/M), floor((b+1)*nz/M))
    rng::Stream rs(seed);
    std::vector<int> planes;
    planes.reserve(M);
    for (int b = 0; b < M; ++b) {
        const int lo = static_cast<int>(static_cast<std::int64_t>(b) * spec.nz / M);
        const int hi = static_cast<int>(static_cast<std::int64_t>(b + 1) * spec.nz / M);
        planes.push_back(lo + static_cast<int>(rs.next_below(static_cast<std::uint64_t>(hi - lo))));
    }
    return from_planes(spec, Geometry::Independent2D, std::move(planes), 0, seed);
}

ObservationSet sample_serial_stack(const LatticeSpec& spec, int z0, int delta_z, int count) {
    spec.validate();
    if (count < 1 || delta_z < 1 || z0 < 0)
        throw std::invalid_argument("sample_serial_stack: need count >= 1, delta_z >= 1, z0 >= 0");
    const std::int64_t last = static_cast<std::int64_t>(z0) + static_cast<std::int64_t>(count - 1) * delta_z;
    if (last >= spec.nz)
        throw std::invalid_argument("sample_serial_stack: stack exceeds volume depth");
    std::vector<int> planes;
    planes.reserve(count);
    for (int m = 0; m < count; ++m) planes.push_back(z0 + m * delta_z);
    return from_planes(spec, Geometry::Serial3D, std::move(planes), delta_z, 0);
}

std::vector<Site> restricted_neighbors(const ObservationSet& obs, const LatticeSpec& spec,
                                       Site site) {
    if (!obs.site_observed(spec, site))
        throw std::invalid_argument("restricted_neighbors: site is not observed");
    std::vector<Site> out;
    for (const auto& d : neighbor_offsets(spec.neighborhood)) {
        const int i = site.i + d[0], j = site.j + d[1], k = site.k + d[2];
        if (spec.in_bounds(i, j, k) && obs.plane_observed(k)) out.push_back({i, j, k});
    }
    return out;
}

void restricted_neighbor_counts(const ObservationSet& obs, const LabelVolume& volume,
                                std::int64_t linear, int* counts, int K) {
    const LatticeSpec& spec = volume.spec;
    const Site s = spec.site(linear);
    for (int t = 0; t < K; ++t) counts[t] = 0;
    for (const auto& d : neighbor_offsets(spec.neighborhood)) {
        const int i = s.i + d[0], j = s.j + d[1], k = s.k + d[2];
        if (spec.in_bounds(i, j, k) && obs.plane_observed(k))
            ++counts[volume.labels[spec.index(i, j, k)]];
    }
}

}  // namespace cellstack::geom

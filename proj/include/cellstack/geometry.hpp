#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cellstack/lattice.hpp"

namespace cellstack::geom {

enum class Geometry { Independent2D, Serial3D, FullVolume };

std::string to_string(Geometry g);
Geometry geometry_from_string(const std::string& s);

// The observed index set of a matched-budget acquisition. Observation is
// plane-complete: every site on a selected z-plane is observed, so
// membership reduces to a plane mask.
struct ObservationSet {
    Geometry geometry = Geometry::FullVolume;
    std::vector<int> plane_zs;         // sorted, distinct
    int delta_z = 0;                   // Serial3D only; 0 otherwise
    std::int64_t budget = 0;           // |planes| * nx * ny
    std::vector<std::uint8_t> plane_mask;  // length nz
    std::uint64_t seed = 0;            // seed used for plane selection (0 if none)

    bool plane_observed(int z) const {
        return z >= 0 && z < static_cast<int>(plane_mask.size()) && plane_mask[z] != 0;
    }
    bool site_observed(const LatticeSpec& spec, Site s) const {
        return spec.in_bounds(s.i, s.j, s.k) && plane_observed(s.k);
    }
    // Materialized unique site list (raster order within plane, planes
    // ascending); |result| == budget.
    std::vector<Site> observed_sites(const LatticeSpec& spec) const;
};

// Everything observed; the FullSim reference arm.
ObservationSet full_volume(const LatticeSpec& spec);

// M distinct planes, one drawn uniformly within each of M equal depth bins
// ("diverse depths" via stratification). Throws on M > nz or M < 1.
ObservationSet sample_independent_planes(const LatticeSpec& spec, int M, std::uint64_t seed);

// Planes {z0, z0 + delta_z, ...}, `count` of them. Throws if the stack
// leaves the volume.
ObservationSet sample_serial_stack(const LatticeSpec& spec, int z0, int delta_z, int count);

// Neighbors of `site` that are themselves observed. Under Independent2D with
// pairwise non-adjacent planes this collapses to the in-plane neighborhood.
// Throws if `site` is not observed.
std::vector<Site> restricted_neighbors(const ObservationSet& obs, const LatticeSpec& spec,
                                       Site site);

// Per-type counts of observed-neighbor labels; the hot-path form used by the
// pseudo-likelihood code. `counts` must have room for K entries.
void restricted_neighbor_counts(const ObservationSet& obs, const LabelVolume& volume,
                                std::int64_t linear, int* counts, int K);

}  // namespace cellstack::geom

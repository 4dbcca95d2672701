#pragma once

#include <array>
#include <string>
#include <vector>

#include "cellstack/cells.hpp"
#include "cellstack/matching.hpp"

namespace cellstack::structure {

// A connected component of the 3D fixed-radius graph over cells of one
// structural type, with a principal axis for arc-length coordinates.
struct Structure3D {
    int structure_id = 0;
    std::vector<int> members;            // indices into the cloud
    std::array<double, 3> axis{1, 0, 0};  // unit principal direction
    std::array<double, 3> origin{0, 0, 0};
    double extent = 0.0;  // member arc-length span along the axis
};

// Connected components of the link_radius graph over cloud points of
// `type_filter`. The principal axis is the largest-variance direction of
// the member coordinates, oriented deterministically.
std::vector<Structure3D> build_structures(const std::vector<match::Point3D>& cloud,
                                          int type_filter, double link_radius);

// Components of the same radius graph restricted to one section's cells
// (planar positions). Used to contrast per-section fragmentation with the
// 3D merge.
int count_planar_components(const SectionTable& section, int type_filter, double link_radius);

// Which cells count as targets for a distance query: every cross-section of
// a type, or an explicit cross-section id set (e.g. a structure's member
// chains).
struct TargetSpec {
    int type = -1;                      // used when ids is empty
    std::vector<std::string> ids;       // explicit cross-section ids
    std::string description;
};

struct DistancePair {
    std::string cell_id;
    int section = 0;
    double d2d = 0.0;  // nearest same-section target, planar metric
    double d3d = 0.0;  // nearest target anywhere in the stacked volume
    bool d2d_defined = false;
};

struct DistanceComparison {
    std::string description;
    std::vector<DistancePair> per_cell;  // one per source cross-section
    double mean_d2d = 0.0, mean_d3d = 0.0;  // over cells with both defined
    std::size_t n_both = 0;
};

// Per source cross-section of `source_type`: d2d is the nearest target in
// the same section under the planar metric; d3d is the nearest target
// cross-section anywhere in the stack under the 3D metric (sections at
// their plane z). Same-section pairs have equal planar and 3D distances, so
// d3d <= d2d holds exactly whenever d2d is defined. Self-pairs excluded.
DistanceComparison compare_distances(const CellTable& sections, int source_type,
                                     const TargetSpec& target);

struct ProfileBin {
    double arc_coord = 0.0;            // bin center along the axis
    std::vector<double> value;         // per type: composition or density
    long long count = 0;
};

enum class ProfileValue { Composition, Density };

// Projects cloud points within band_radius of the structure axis onto the
// axis and bins them by arc length over the member extent. Composition rows
// sum to 1 for nonempty bins; empty bins carry zero counts.
std::vector<ProfileBin> along_structure_profile(const Structure3D& structure,
                                                const std::vector<match::Point3D>& cloud,
                                                int n_types, double band_radius, int bins,
                                                ProfileValue value);

}  // namespace cellstack::structure

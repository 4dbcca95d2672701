#pragma once

#include <string>
#include <vector>

#include "cellstack/cells.hpp"

namespace cellstack::match {

// Per-type cross-section size statistics. Types with fewer than `min_count`
// cells are flagged low-confidence and carry the pooled global statistics.
struct TypeSizeStats {
    double median_area = 0.0, p10_area = 0.0, p90_area = 0.0;
    double r_median = 0.0;  // sqrt(median_area / pi)
    double r_max = 0.0;     // sqrt(p90_area / pi)
    std::size_t count = 0;
    bool low_confidence = false;
};

struct SizeStats {
    std::vector<TypeSizeStats> per_type;
    TypeSizeStats pooled;
    int min_count = 20;

    const TypeSizeStats& of(int type) const { return per_type.at(type); }
};

SizeStats compute_size_stats(const CellTable& table, int min_count = 20);

// Matching reach for one type: kappa * max(R_t_max, delta_z).
double match_tolerance(const SizeStats& stats, int type, double delta_z, double kappa);

// Sparse, type-blocked cost structure for one adjacent section pair. Only
// same-type pairs within tolerance are candidates; cost is the in-plane
// Euclidean distance.
struct CostMatrix {
    struct Block {
        int type = 0;
        double tolerance = 0.0;
        std::vector<int> rows, cols;  // indices into the two sections' cell lists
        // per row: (local col, distance), sorted by col
        std::vector<std::vector<std::pair<int, double>>> candidates;
    };
    std::vector<Block> blocks;
    double delta_z = 0.0;
    const SectionTable* section_a = nullptr;
    const SectionTable* section_b = nullptr;
};

CostMatrix build_cost_matrix(const SectionTable& section_a, const SectionTable& section_b,
                             const SizeStats& stats, double delta_z, double kappa = 1.0);

struct MatchResult {
    struct Pair {
        std::string id_a, id_b;
        int index_a = 0, index_b = 0;  // cell indices within the two sections
        double cost = 0.0;
    };
    std::vector<Pair> pairs;
    std::vector<std::string> unmatched_a, unmatched_b;
    double delta_z = 0.0;
    double total_objective = 0.0;  // sum of pair costs + tol_t per unmatched cell
};

// Optimal one-to-one assignment per type block. Leaving a cell unmatched
// costs the block tolerance; the square augmented formulation (dummy rows
// and columns) makes that penalty explicit, so the Hungarian optimum
// minimizes  sum(pair costs) + tol_t * #unmatched  exactly.
MatchResult solve_assignment(const CostMatrix& costs);

// Dense square-matrix Hungarian solver (Jonker-Volgenant style shortest
// augmenting paths, O(n^3)). row_to_col[i] = assigned column of row i.
double hungarian(const std::vector<std::vector<double>>& cost, std::vector<int>& row_to_col);

// A cell tracked across consecutive sampled sections (length >= 2: shared
// cell, SC) or seen once (lone cell, LC). Members are ordered by section.
struct CellChain {
    std::vector<CellRecord> cells;
    std::vector<double> link_costs;  // size = cells.size() - 1
    int type = 0;
    bool split_flagged = false;  // produced by splitting an overlong chain
    bool is_shared() const { return cells.size() >= 2; }
};

// Matches every adjacent section pair, merges pairs sharing an endpoint
// into chains, and splits chains that exceed the plausible per-cell extent
// ceil(2 R_t_max / delta_z) + 1 at their weakest (largest-cost) link.
// Every input cell lands in exactly one chain.
std::vector<CellChain> link_chains(const CellTable& table, const SizeStats& stats, double delta_z,
                                   double kappa = 1.0);

struct Point3D {
    std::string cell_id;  // canonical: first chain member
    double x = 0.0, y = 0.0, z = 0.0;
    int type = 0;
    enum class Provenance { SC, LC } provenance = Provenance::LC;
    double z_lo = 0.0, z_hi = 0.0;  // depth interval; z always inside
    int chain_len = 1;
    bool depth_clamped = false;  // sphere fit fell outside the interval
};

// 3D centroid under the spherical cross-section model. For shared cells the
// section radii r_m = sqrt(area_m / pi) at planes z_m are fit to
// r_m^2 = R^2 - (z_m - z_c)^2 by linear least squares (exact for two
// sections); lone cells sit at their section plane with depth bounded by the
// neighboring planes.
Point3D estimate_centroid(const CellChain& chain, const SizeStats& stats, double delta_z);

struct Reconstruction {
    std::vector<CellChain> chains;
    std::vector<Point3D> points;  // one per chain, same order
};

Reconstruction reconstruct(const CellTable& table, const SizeStats& stats, double delta_z,
                           double kappa = 1.0);

}  // namespace cellstack::match

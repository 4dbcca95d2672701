#pragma once

#include <cstdint>
#include <vector>

#include "cellstack/cells.hpp"

namespace cellstack::stats {

// Exact fixed-radius neighbor queries over planar points via grid buckets
// (bucket side = query radius; candidates are distance-checked).
class PlanarGrid {
public:
    PlanarGrid(const std::vector<double>& xs, const std::vector<double>& ys, double radius);

    // Indices j != i with dist(i, j) <= radius, ascending.
    std::vector<int> within_radius(int i) const;
    // All directed neighbor lists at once (adjacency of the radius graph).
    std::vector<std::vector<int>> adjacency() const;

private:
    double radius_, inv_cell_;
    std::vector<double> xs_, ys_;
    std::unordered_map<std::uint64_t, std::vector<int>> buckets_;
    std::uint64_t key(double x, double y) const;
};

// Global type fractions; sums to 1. Throws on an empty input.
std::vector<double> abundance(const CellTable& table);

// Fraction of `trials` random M-section draws whose union contains at least
// k cells of `type`. Subsets are prefix-stable in M for a fixed (seed,
// trial), so detectability is monotone in M and k on shared seeds.
double detectability(const CellTable& table, int type, int M, int k, int trials,
                     std::uint64_t seed);

struct EnrichmentResult {
    int target_type = 0;
    int partner_type = 0;
    double z_score = 0.0;
    long long observed_count = 0;
    double null_mean = 0.0;
    double null_std = 0.0;
    double radius = 0.0;
    int n_permutations = 0;
    bool degenerate_null = false;  // null_std == 0; z reported as 0
};

struct EnrichmentRun {
    std::vector<EnrichmentResult> per_partner;  // one per type in the table
    bool no_target_cells = false;
};

// Neighborhood enrichment of each partner type within `radius` of the
// target cells, against a label-permutation null over fixed positions.
// Pairs are directed and anchored at target cells; self-pairs are excluded.
// Permutation replicates run in parallel; results are reproducible for any
// thread count (per-replicate counter streams, fixed combine order).
EnrichmentRun neighborhood_enrichment(const SectionTable& section, int n_types, int target_type,
                                      double radius, int n_permutations, std::uint64_t seed);

// Serial reference for the permutation kernel; must match bitwise.
EnrichmentRun neighborhood_enrichment_serial(const SectionTable& section, int n_types,
                                             int target_type, double radius, int n_permutations,
                                             std::uint64_t seed);

struct StabilityProfile {
    // per partner type: z score per usable section (aligned with `sections`)
    std::vector<std::vector<double>> z_by_partner;
    std::vector<int> sections;          // section indices with >= 1 target cell
    std::vector<double> iqr;            // per partner, across sections
    std::vector<double> frac_beyond_2;  // per partner, fraction with |z| > 2
    bool spread_defined = false;        // needs >= 2 usable sections
};

// Section-to-section variability of the enrichment z-scores.
StabilityProfile section_stability_profile(const CellTable& table, int target_type, double radius,
                                           int n_permutations, std::uint64_t seed);

}  // namespace cellstack::stats

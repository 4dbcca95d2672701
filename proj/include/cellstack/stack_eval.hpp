#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cellstack/cells.hpp"
#include "cellstack/matching.hpp"

namespace cellstack::stackeval {

// Ground-truth cell in a synthetic reference stack.
struct TrueCell {
    long long id = 0;
    int type = 0;
    double x = 0.0, y = 0.0, z = 0.0;
    double radius = 0.0;
};

// Densely sectioned reference: cross-sections carry true_volume_id so
// reconstructions can be scored against the per-cell 3D centroids.
struct ReferenceStack {
    double base_dz = 2.0;
    CellTable table;               // sections at base spacing
    std::vector<TrueCell> cells;   // all generated cells (some may miss every plane)

    // distinct true ids that appear in at least one section
    std::vector<long long> observed_ids() const;
};

struct SphereType {
    std::string name;
    double r_min = 3.0, r_max = 10.0;  // radii drawn uniformly
};

struct SphereStackConfig {
    int n_cells = 500;
    std::vector<SphereType> types = {{"a", 3.0, 10.0}};
    double lx = 200.0, ly = 200.0, lz = 100.0;  // volume extent, micrometers
    double base_dz = 2.0;
    double min_gap_factor = 0.9;  // reject centers closer than factor*(r_i+r_j)
    int max_attempts_per_cell = 200;
    bool keep_fully_inside = true;  // centers placed so spheres avoid the faces
};

// Spheres with known centers and types, sliced at base_dz; cross-section
// areas are exact: pi * (R^2 - (z_plane - z_c)^2). Section planes sit at
// z = base_dz * m; small spheres can fall entirely between planes.
ReferenceStack synth_sphere_stack(const SphereStackConfig& cfg, std::uint64_t seed);

// Keeps sections whose index is congruent to `offset` modulo
// delta_z / base_dz. delta_z must be a positive multiple of the base
// spacing. True ids ride along for scoring only.
CellTable subsample_stack(const ReferenceStack& ref, double delta_z, int offset);

struct CoverageReport {
    double delta_z = 0.0;
    int offset = -1;  // -1 marks the pooled row
    double sc_fraction = 0.0, lc_fraction = 0.0;  // over sampled cross-sections
    long long captured_unique = 0, missed_unique = 0;
    double captured_frac = 0.0, missed_frac = 0.0;
    double loc_mean = 0.0, loc_std = 0.0, loc_p50 = 0.0, loc_p90 = 0.0;
    long long link_errors = 0;  // chains mixing true ids
    std::size_t n_cross_sections = 0;
    std::size_t n_chains = 0;
    std::vector<double> loc_errors;  // per attributed chain, for histograms
};

struct EvalConfig {
    double kappa = 1.0;
    int min_count = 20;  // size-stat confidence threshold
};

// Reconstructs each offset's subsample and scores it against the reference:
// SC/LC composition of the sampled cross-sections, unique-id coverage, and
// 3D localization error of chain centroids against the true centers (chains
// attributed by majority true id, ties to the largest-area member).
// Returns one report per offset plus a pooled row (offset = -1) appended.
std::vector<CoverageReport> evaluate(const ReferenceStack& ref, double delta_z,
                                     const std::vector<int>& offsets, const EvalConfig& cfg = {});

// All residues 0..step-1.
std::vector<int> all_offsets(const ReferenceStack& ref, double delta_z);

}  // namespace cellstack::stackeval

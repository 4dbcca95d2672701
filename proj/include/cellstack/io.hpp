#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "cellstack/cells.hpp"
#include "cellstack/geometry.hpp"
#include "cellstack/lattice.hpp"
#include "cellstack/matching.hpp"
#include "cellstack/mple.hpp"
#include "cellstack/spatial_stats.hpp"
#include "cellstack/stack_eval.hpp"

namespace cellstack::io {

// Error taxonomy mapped to CLI exit codes (config 2, schema 3, numeric 4).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shortest-round-trip double formatting; output is byte-stable across runs.
std::string format_double(double v);

// Write-to-temp-then-rename in the destination directory.
void atomic_write_text(const std::string& path, const std::string& content);

std::string read_text(const std::string& path);

// FNV-1a over the canonical config text; recorded in output sidecars.
std::string fnv1a_hex(const std::string& text);

// JSON sidecar (<path>.meta.json) carrying schema id, seed, and config hash.
void write_sidecar(const std::string& path, const std::string& schema, std::uint64_t seed,
                   const std::string& config_hash);

// ---- volume files: raw 1-based labels + JSON sidecar ----
void write_volume(const std::string& path, const LabelVolume& volume, int num_types);
LabelVolume read_volume(const std::string& path, int& num_types);

// ---- observation sets: JSON + site-list CSV ----
void write_observation_set(const std::string& json_path, const geom::ObservationSet& obs,
                           const LatticeSpec& spec);
geom::ObservationSet read_observation_set(const std::string& json_path, const LatticeSpec& spec);

// ---- cell tables: cell_id,x,y,z,area,type,section (+true_volume_id) ----
void write_cells_csv(const std::string& path, const CellTable& table, bool with_true_id);
CellTable read_cells_csv(const std::string& path);

// ---- tidy result CSVs ----
std::string recovery_csv(const std::vector<mple::RecoveryReport>& rows);
std::string coverage_csv(const std::vector<stackeval::CoverageReport>& rows);
std::string detectability_csv(
    const std::vector<std::tuple<std::string, int, int, double>>& rows);
std::string enrichment_csv(const TypeTable& types,
                           const std::vector<std::pair<int, stats::EnrichmentResult>>& rows);
std::string cloud_csv(const TypeTable& types, const std::vector<match::Point3D>& points);
std::vector<match::Point3D> read_cloud_csv(const std::string& path, TypeTable& types);

}  // namespace cellstack::io

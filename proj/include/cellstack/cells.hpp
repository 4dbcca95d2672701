#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cellstack/lattice.hpp"

namespace cellstack {

// One segmented cross-section of a cell in one section plane. Coordinates
// and areas are in micrometers (squared). `type` is an index into the
// owning table's TypeTable. `true_id` links cross-sections of the same
// biological cell when known (reference stacks); -1 otherwise.
struct CellRecord {
    std::string id;
    double x = 0.0, y = 0.0, z = 0.0;
    double area = 0.0;
    int type = 0;
    int section = 0;
    long long true_id = -1;
};

// Interned cell-type names; records store indices.
class TypeTable {
public:
    int intern(const std::string& name) {
        auto it = index_.find(name);
        if (it != index_.end()) return it->second;
        const int id = static_cast<int>(names_.size());
        names_.push_back(name);
        index_.emplace(name, id);
        return id;
    }
    int lookup(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? -1 : it->second;
    }
    const std::string& name(int id) const { return names_.at(id); }
    int size() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
};

struct SectionTable {
    int section_index = 0;
    double z = 0.0;
    std::vector<CellRecord> cells;
};

// A dataset of sections sorted by z, plus the shared type registry.
struct CellTable {
    TypeTable types;
    std::vector<SectionTable> sections;

    std::size_t total_cells() const {
        std::size_t n = 0;
        for (const auto& s : sections) n += s.cells.size();
        return n;
    }
    std::vector<const CellRecord*> all_cells() const {
        std::vector<const CellRecord*> out;
        out.reserve(total_cells());
        for (const auto& s : sections)
            for (const auto& c : s.cells) out.push_back(&c);
        return out;
    }
    // Groups loose records into per-section tables (sorted by z; cells keep
    // input order within a section). Validates that records agree on each
    // section's z.
    static CellTable from_records(TypeTable types, std::vector<CellRecord> records);
};

// Views a simulated label volume as section data: one section per z-plane,
// one cell per voxel at the voxel center, area = voxel_size^2. Handy for
// running the section statistics on simulated tissue.
CellTable volume_to_cell_table(const LabelVolume& volume, int num_types, double voxel_size_um,
                               const std::vector<std::string>& type_names = {});

}  // namespace cellstack

#include "cellstack/cells.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace cellstack {

CellTable CellTable::from_records(TypeTable types, std::vector<CellRecord> records) {
    CellTable table;
    table.types = std::move(types);
    std::map<int, SectionTable> by_section;
    for (auto& r : records) {
        auto [it, inserted] = by_section.try_emplace(r.section);
        SectionTable& sec = it->second;
        if (inserted) {
            sec.section_index = r.section;
            sec.z = r.z;
        } else if (std::abs(sec.z - r.z) > 1e-9) {
            throw std::invalid_argument("CellTable: records in section " +
                                        std::to_string(r.section) + " disagree on z");
        }
        sec.cells.push_back(std::move(r));
    }
    table.sections.reserve(by_section.size());
    for (auto& [idx, sec] : by_section) table.sections.push_back(std::move(sec));
    std::sort(table.sections.begin(), table.sections.end(),
              [](const SectionTable& a, const SectionTable& b) { return a.z < b.z; });
    return table;
}

CellTable volume_to_cell_table(const LabelVolume& volume, int num_types, double voxel_size_um,
                               const std::vector<std::string>& type_names) {
    volume.validate(num_types);
    CellTable table;
    for (int t = 0; t < num_types; ++t)
        table.types.intern(t < static_cast<int>(type_names.size()) ? type_names[t]
                                                                   : "type" + std::to_string(t + 1));
    const LatticeSpec& spec = volume.spec;
    table.sections.reserve(spec.nz);
    for (int k = 0; k < spec.nz; ++k) {
        SectionTable sec;
        sec.section_index = k;
        sec.z = (k + 0.5) * voxel_size_um;
        sec.cells.reserve(static_cast<std::size_t>(spec.nx) * spec.ny);
        for (int j = 0; j < spec.ny; ++j)
            for (int i = 0; i < spec.nx; ++i) {
                CellRecord c;
                c.id = "v" + std::to_string(spec.index(i, j, k));
                c.x = (i + 0.5) * voxel_size_um;
                c.y = (j + 0.5) * voxel_size_um;
                c.z = sec.z;
                c.area = voxel_size_um * voxel_size_um;
                c.type = volume.labels[spec.index(i, j, k)];
                c.section = k;
                sec.cells.push_back(std::move(c));
            }
        table.sections.push_back(std::move(sec));
    }
    return table;
}

}  // namespace cellstack

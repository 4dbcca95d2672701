#include "cellstack/lattice.hpp"

#include <stdexcept>

namespace cellstack {

std::string to_string(Neighborhood nb) {
    return nb == Neighborhood::N6 ? "N6" : "N26";
}

Neighborhood neighborhood_from_string(const std::string& s) {
    if (s == "N6" || s == "n6") return Neighborhood::N6;
    if (s == "N26" || s == "n26") return Neighborhood::N26;
    throw std::invalid_argument("unknown neighborhood: " + s);
}

void LatticeSpec::validate() const {
    if (nx < 1 || ny < 1 || nz < 1)
        throw std::invalid_argument("LatticeSpec: all dims must be >= 1");
}

namespace {

std::vector<std::array<int, 3>> make_offsets(Neighborhood nb, bool positive_half) {
    std::vector<std::array<int, 3>> out;
    for (int dk = -1; dk <= 1; ++dk)
        for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di) {
                if (di == 0 && dj == 0 && dk == 0) continue;
                if (nb == Neighborhood::N6 && std::abs(di) + std::abs(dj) + std::abs(dk) != 1)
                    continue;
                if (positive_half) {
                    // lexicographic "forward" direction so each undirected
                    // edge appears once
                    if (dk < 0) continue;
                    if (dk == 0 && dj < 0) continue;
                    if (dk == 0 && dj == 0 && di < 0) continue;
                }
                out.push_back({di, dj, dk});
            }
    return out;
}

}  // namespace

const std::vector<std::array<int, 3>>& neighbor_offsets(Neighborhood nb) {
    static const auto n6 = make_offsets(Neighborhood::N6, false);
    static const auto n26 = make_offsets(Neighborhood::N26, false);
    return nb == Neighborhood::N6 ? n6 : n26;
}

const std::vector<std::array<int, 3>>& positive_half_offsets(Neighborhood nb) {
    static const auto n6 = make_offsets(Neighborhood::N6, true);
    static const auto n26 = make_offsets(Neighborhood::N26, true);
    return nb == Neighborhood::N6 ? n6 : n26;
}

std::vector<Site> neighbor_sites(const LatticeSpec& spec, Site site) {
    if (!spec.in_bounds(site.i, site.j, site.k))
        throw std::out_of_range("neighbor_sites: site outside lattice");
    std::vector<Site> out;
    for (const auto& d : neighbor_offsets(spec.neighborhood)) {
        const int i = site.i + d[0], j = site.j + d[1], k = site.k + d[2];
        if (spec.in_bounds(i, j, k)) out.push_back({i, j, k});
    }
    return out;
}

void LabelVolume::validate(int num_types) const {
    spec.validate();
    if (static_cast<std::int64_t>(labels.size()) != spec.size())
        throw std::invalid_argument("LabelVolume: label array size does not match dims");
    for (std::uint8_t l : labels)
        if (l >= num_types)
            throw std::invalid_argument("LabelVolume: label out of range");
}

}  // namespace cellstack

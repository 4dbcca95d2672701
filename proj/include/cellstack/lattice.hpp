#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cellstack {

// Within-plane and across-plane adjacency on the voxel lattice. N26 is the
// default tissue neighborhood; N6 is face adjacency.
enum class Neighborhood { N6, N26 };

std::string to_string(Neighborhood nb);
Neighborhood neighborhood_from_string(const std::string& s);

struct Site {
    int i = 0, j = 0, k = 0;
    bool operator==(const Site&) const = default;
};

// Free-boundary 3D lattice (no wraparound); neighborhoods are clipped at the
// faces.
struct LatticeSpec {
    int nx = 1, ny = 1, nz = 1;
    Neighborhood neighborhood = Neighborhood::N26;

    std::int64_t size() const {
        return static_cast<std::int64_t>(nx) * ny * nz;
    }
    bool in_bounds(int i, int j, int k) const {
        return i >= 0 && i < nx && j >= 0 && j < ny && k >= 0 && k < nz;
    }
    std::int64_t index(int i, int j, int k) const {
        return (static_cast<std::int64_t>(k) * ny + j) * nx + i;
    }
    Site site(std::int64_t linear) const {
        const int i = static_cast<int>(linear % nx);
        const int j = static_cast<int>((linear / nx) % ny);
        const int k = static_cast<int>(linear / (static_cast<std::int64_t>(nx) * ny));
        return {i, j, k};
    }
    void validate() const;
};

// Neighbor offsets for a neighborhood; `positive_half` returns the subset
// that enumerates each undirected edge exactly once.
const std::vector<std::array<int, 3>>& neighbor_offsets(Neighborhood nb);
const std::vector<std::array<int, 3>>& positive_half_offsets(Neighborhood nb);

// All in-bounds lattice neighbors of `site`; never contains `site` itself.
// Throws std::out_of_range if the site is outside the lattice.
std::vector<Site> neighbor_sites(const LatticeSpec& spec, Site site);

// Dense label configuration over a lattice. Labels are 0-based internally
// ({0..K-1}); external files use 1-based labels, converted at the I/O
// boundary only.
struct LabelVolume {
    LatticeSpec spec;
    std::vector<std::uint8_t> labels;
    std::uint64_t seed = 0;

    std::uint8_t label_at(int i, int j, int k) const { return labels[spec.index(i, j, k)]; }
    void validate(int num_types) const;
};

}  // namespace cellstack

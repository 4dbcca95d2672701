#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cellstack/lattice.hpp"
#include "cellstack/util.hpp"

namespace cellstack::mrf {

// Gibbs model over the label lattice: unary field `alpha` sets global
// prevalence per type, symmetric `B` sets pairwise neighbor affinities
// (diagonal = self-cohesion), `lambda` is the ridge weight used when the
// parameters are estimated.
struct MRFParams {
    int K = 0;
    std::vector<double> alpha;
    SquareMatrix B;
    double lambda = 1e-3;

    // Validates K >= 2, finiteness, symmetry of B and lambda >= 0; B is
    // symmetrized exactly (averaging) so downstream code can rely on it.
    static MRFParams make(std::vector<double> alpha, SquareMatrix B, double lambda = 1e-3);
};

// Per-type counts of the labels on a site's neighbors; the sufficient
// statistic for the site conditional.
using NeighborCounts = std::vector<int>;

// softmax_a( alpha_a + sum_t B(a,t) * counts[t] ), computed with
// max-subtraction. Shared by the sampler and the pseudo-likelihood code.
void conditional_from_counts(const MRFParams& params, const int* counts, double* out_probs);

// Conditional distribution of the label at `site` given its current lattice
// neighbors. Returns a length-K probability vector.
std::vector<double> conditional_distribution(const LabelVolume& volume, Site site,
                                             const MRFParams& params);

enum class GibbsInit { UniformRandom, Given };

struct GibbsOptions {
    GibbsInit init = GibbsInit::UniformRandom;
    std::optional<LabelVolume> given;  // required when init == Given
};

// `sweeps` full-lattice single-site Gibbs sweeps. Deterministic given
// (seed, sweeps, init, spec, params): every site draw is a counter-RNG value
// keyed by (seed, sweep, site). N6 lattices update in two-color checkerboard
// order with the within-color loop parallelized; N26 has no two-coloring and
// updates in sequential raster order.
LabelVolume gibbs_sample(const LatticeSpec& spec, const MRFParams& params, int sweeps,
                         std::uint64_t seed, const GibbsOptions& opts = {});

// Serial reference for the checkerboard path; must match gibbs_sample
// bitwise. Kept for tests and the kernel benchmark.
LabelVolume gibbs_sample_serial(const LatticeSpec& spec, const MRFParams& params, int sweeps,
                                std::uint64_t seed, const GibbsOptions& opts = {});

// Gibbs exponent sum_i alpha_{x_i} + sum_{(i,j) in E} B_{x_i,x_j}, each
// undirected edge counted once. Diagnostics and small-lattice exact checks
// only; no partition function is attempted.
double log_unnormalized_density(const LabelVolume& volume, const MRFParams& params);

}  // namespace cellstack::mrf

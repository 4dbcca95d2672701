#pragma once

#include <cstdint>
#include <vector>

#include "cellstack/geometry.hpp"
#include "cellstack/lattice.hpp"
#include "cellstack/mrf.hpp"

namespace cellstack::mple {

struct MPLEConfig {
    double lambda = 1e-3;       // ridge weight on B
    int max_iters = 300;
    // sup-norm tolerance on the per-site-averaged gradient (fit optimizes
    // the mean objective, so the criterion is budget-independent)
    double grad_tolerance = 1e-6;
    enum class Gauge { AlphaLastZero } gauge = Gauge::AlphaLastZero;
    enum class Optimizer { LbfgsLike, GradientDescent } optimizer = Optimizer::LbfgsLike;
    double alpha_clamp = 30.0;  // unary cap; keeps absent types finite
    int lbfgs_memory = 10;
};

// Site labels and observed-neighbor type counts over the observed set — the
// sufficient statistics the pseudo-likelihood needs. Built once per fit.
struct PllData {
    int K = 0;
    std::vector<std::uint8_t> site_label;
    std::vector<std::uint16_t> counts;  // n_sites * K, row per site
    std::size_t n_sites() const { return site_label.size(); }
};

PllData build_pll_data(const LabelVolume& volume, const geom::ObservationSet& obs, int K);

// Parameter vector layout used by the optimizer and the finite-difference
// oracle: [alpha_0..alpha_{K-1}, B upper triangle row-major incl. diagonal].
// The triangle parameterization keeps B exactly symmetric at every iterate.
std::size_t theta_size(int K);
std::size_t triu_index(int K, int a, int b);  // a <= b
std::vector<double> pack_theta(const mrf::MRFParams& params);
mrf::MRFParams unpack_theta(const std::vector<double>& theta, int K, double lambda);

// Penalized pseudo-log-likelihood (maximization sign):
//   sum_{i in Omega} log p(x_i | observed neighbors) - lambda * ||B||_F^2.
// Throws on an empty observed set.
double pseudo_log_likelihood(const LabelVolume& volume, const geom::ObservationSet& obs,
                             const mrf::MRFParams& params);

// Analytic gradient of the objective above. grad_B uses the symmetric-matrix
// convention: entry (a,b) is the derivative along the symmetric direction
// e_ab + e_ba (diagonal along e_aa), i.e. the derivative with respect to the
// tied upper-triangle parameter; it includes the ridge term.
void pseudo_ll_gradient(const LabelVolume& volume, const geom::ObservationSet& obs,
                        const mrf::MRFParams& params, std::vector<double>& grad_alpha,
                        SquareMatrix& grad_B);

// Objective/gradient on prebuilt data in minimization form (negated).
// grad may be null for an objective-only evaluation. Serial reference kept
// for tests and the kernel benchmark; the default entry point reduces in
// fixed blocks and is bitwise reproducible for any thread count.
double negated_objective(const PllData& data, double lambda, const std::vector<double>& theta,
                         std::vector<double>* grad);
double negated_objective_serial(const PllData& data, double lambda,
                                const std::vector<double>& theta, std::vector<double>* grad);

struct FitResult {
    mrf::MRFParams params;   // gauge-fixed: alpha_K == 0 exactly
    bool converged = false;  // sup-norm gradient below tolerance
    int iterations = 0;
    double grad_inf_norm = 0.0;
    double objective = 0.0;  // penalized PLL at the solution (maximization sign)
};

// Regularized MPLE fit over the observed sites. Deterministic given inputs;
// non-convergence is flagged on the result, never thrown.
FitResult fit(const LabelVolume& volume, const geom::ObservationSet& obs, int K,
              const MPLEConfig& config = {});

struct RecoveryReport {
    double mae_alpha = 0.0, rmse_alpha = 0.0;
    double mae_B = 0.0, rmse_B = 0.0;
    geom::Geometry geometry = geom::Geometry::FullVolume;
    std::uint64_t seed = 0;
    std::int64_t budget = 0;
};

// Blockwise MAE/RMSE between two parameter sets after fixing both to the
// alpha_K = 0 gauge. B is compared on the upper triangle incl. diagonal.
RecoveryReport recovery_error(const mrf::MRFParams& est, const mrf::MRFParams& truth);

// Matched-budget recovery study: per seed, simulate a volume, observe it as
// (a) the full volume, (b) a serial stack of M voxel-adjacent planes, and
// (c) M independent stratified planes, fit each, and score against truth.
// Returns 3 rows per seed in that order.
struct StudyConfig {
    LatticeSpec spec;
    mrf::MRFParams truth;
    int sweeps = 50;
    int planes = 6;       // M, matched between the two section geometries
    int delta_z = 1;      // serial arm spacing (voxel units)
    MPLEConfig estimator;
};

std::vector<RecoveryReport> run_recovery_study(const StudyConfig& cfg,
                                               const std::vector<std::uint64_t>& seeds);

}  // namespace cellstack::mple

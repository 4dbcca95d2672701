// Compares the OpenMP kernels against their serial references: wall time and
// agreement for the pseudo-likelihood gradient, the N6 checkerboard Gibbs
// sweep, and the enrichment permutation null.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "cellstack/cells.hpp"
#include "cellstack/geometry.hpp"
#include "cellstack/mple.hpp"
#include "cellstack/mrf.hpp"
#include "cellstack/parallel.hpp"
#include "cellstack/rng.hpp"
#include "cellstack/spatial_stats.hpp"

using namespace cellstack;
using Clock = std::chrono::high_resolution_clock;

namespace {

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void report(const char* name, double serial_ms, double parallel_ms, const std::string& agree) {
    std::printf("%-28s %10.1f ms %10.1f ms %8.2fx   %s\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms, agree.c_str());
}

}  // namespace

int main() {
    std::printf("threads: %d\n", par::max_threads());
    std::printf("%-28s %13s %13s %9s   %s\n", "kernel", "serial", "openmp", "speedup",
                "agreement");

    // shared fixture: a K=3 volume
    std::vector<double> alpha = {0.2, 0.0, -0.3};
    SquareMatrix B(3);
    B.at(0, 0) = 0.12;
    B.at(1, 1) = 0.10;
    B.at(2, 2) = 0.08;
    B.at(0, 1) = B.at(1, 0) = -0.05;
    const mrf::MRFParams params = mrf::MRFParams::make(alpha, B, 1e-3);

    {  // pseudo-likelihood objective + gradient on a 48^3 volume
        const LatticeSpec spec{48, 48, 48, Neighborhood::N26};
        const LabelVolume vol = mrf::gibbs_sample(spec, params, 10, 7);
        const auto obs = geom::full_volume(spec);
        const mple::PllData data = mple::build_pll_data(vol, obs, 3);
        const auto theta = mple::pack_theta(params);
        std::vector<double> g_serial(theta.size()), g_par(theta.size());

        auto t0 = Clock::now();
        double f_serial = 0.0;
        for (int rep = 0; rep < 5; ++rep)
            f_serial = mple::negated_objective_serial(data, 1e-3, theta, &g_serial);
        const double serial_ms = ms_since(t0) / 5;

        t0 = Clock::now();
        double f_par = 0.0;
        for (int rep = 0; rep < 5; ++rep)
            f_par = mple::negated_objective(data, 1e-3, theta, &g_par);
        const double par_ms = ms_since(t0) / 5;

        double max_dg = std::abs(f_serial - f_par) / std::abs(f_serial);
        for (std::size_t i = 0; i < theta.size(); ++i)
            max_dg = std::max(max_dg, std::abs(g_serial[i] - g_par[i]) /
                                          std::max(1.0, std::abs(g_serial[i])));
        char buf[64];
        std::snprintf(buf, sizeof(buf), "max rel diff %.2e", max_dg);
        report("pll objective+gradient", serial_ms, par_ms, buf);
    }

    {  // N6 checkerboard Gibbs sweeps on a 64^3 volume
        const LatticeSpec spec{64, 64, 64, Neighborhood::N6};
        auto t0 = Clock::now();
        const LabelVolume a = mrf::gibbs_sample_serial(spec, params, 20, 11);
        const double serial_ms = ms_since(t0);
        t0 = Clock::now();
        const LabelVolume b = mrf::gibbs_sample(spec, params, 20, 11);
        const double par_ms = ms_since(t0);
        report("gibbs sweep (N6 colors)", serial_ms, par_ms,
               a.labels == b.labels ? "bitwise equal" : "MISMATCH");
    }

    {  // enrichment permutation null, 400 cells x 2000 permutations
        SectionTable sec;
        sec.section_index = 0;
        sec.z = 0.0;
        rng::Stream rs(99);
        for (int i = 0; i < 400; ++i) {
            CellRecord c;
            c.id = "c" + std::to_string(i);
            c.x = rs.next_in(0, 400);
            c.y = rs.next_in(0, 400);
            c.area = 25.0;
            c.type = static_cast<int>(rs.next_below(3));
            sec.cells.push_back(std::move(c));
        }
        auto t0 = Clock::now();
        const auto a = stats::neighborhood_enrichment_serial(sec, 3, 0, 30.0, 2000, 5);
        const double serial_ms = ms_since(t0);
        t0 = Clock::now();
        const auto b = stats::neighborhood_enrichment(sec, 3, 0, 30.0, 2000, 5);
        const double par_ms = ms_since(t0);
        bool equal = true;
        for (int t = 0; t < 3; ++t)
            equal &= a.per_partner[t].z_score == b.per_partner[t].z_score &&
                     a.per_partner[t].null_mean == b.per_partner[t].null_mean;
        report("enrichment permutations", serial_ms, par_ms,
               equal ? "bitwise equal" : "MISMATCH");
    }
    return 0;
}

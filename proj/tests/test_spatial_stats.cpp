#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cellstack/mrf.hpp"
#include "cellstack/rng.hpp"
#include "cellstack/spatial_stats.hpp"
#include "cellstack/util.hpp"

using namespace cellstack;

namespace {

CellTable table_from(const std::vector<std::vector<std::pair<std::pair<double, double>, int>>>&
                         sections_cells,
                     int n_types) {
    TypeTable types;
    for (int t = 0; t < n_types; ++t) types.intern("t" + std::to_string(t));
    std::vector<CellRecord> records;
    int id = 0;
    for (int s = 0; s < static_cast<int>(sections_cells.size()); ++s)
        for (const auto& [xy, type] : sections_cells[s]) {
            CellRecord c;
            c.id = "c" + std::to_string(id++);
            c.x = xy.first;
            c.y = xy.second;
            c.z = 10.0 * s;
            c.area = 25.0;
            c.type = type;
            c.section = s;
            records.push_back(std::move(c));
        }
    return CellTable::from_records(std::move(types), std::move(records));
}

SectionTable random_section(int n, int n_types, double extent, std::uint64_t seed) {
    SectionTable sec;
    sec.section_index = 0;
    sec.z = 0.0;
    rng::Stream rs(seed);
    for (int i = 0; i < n; ++i) {
        CellRecord c;
        c.id = "c" + std::to_string(i);
        c.x = rs.next_in(0, extent);
        c.y = rs.next_in(0, extent);
        c.area = 25.0;
        c.type = static_cast<int>(rs.next_below(n_types));
        c.section = 0;
        sec.cells.push_back(std::move(c));
    }
    return sec;
}

}  // namespace

TEST_CASE("abundance fractions") {
    {
        const auto t = table_from({{{{0, 0}, 0}, {{1, 0}, 0}}}, 1);
        const auto f = stats::abundance(t);
        CHECK(f[0] == 1.0);
    }
    {
        const auto t = table_from({{{{0, 0}, 0}, {{1, 0}, 0}, {{2, 0}, 0}, {{3, 0}, 1}}}, 2);
        const auto f = stats::abundance(t);
        CHECK(f[0] == doctest::Approx(0.75));
        CHECK(f[1] == doctest::Approx(0.25));
    }
    {
        // recount oracle + ordering invariance
        rng::Stream rs(4);
        std::vector<std::vector<std::pair<std::pair<double, double>, int>>> data(3);
        std::vector<long long> counts(4, 0);
        for (auto& sec : data)
            for (int i = 0; i < 50; ++i) {
                const int t = static_cast<int>(rs.next_below(4));
                ++counts[t];
                sec.push_back({{rs.next_in(0, 10), rs.next_in(0, 10)}, t});
            }
        auto t = table_from(data, 4);
        const auto f = stats::abundance(t);
        double sum = 0.0;
        for (int a = 0; a < 4; ++a) {
            CHECK(f[a] == doctest::Approx(counts[a] / 150.0).epsilon(1e-12));
            sum += f[a];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        std::reverse(t.sections[0].cells.begin(), t.sections[0].cells.end());
        CHECK(stats::abundance(t) == f);
    }
}

TEST_CASE("detectability degenerate cases and bounds") {
    // 5 sections, type 0 plentiful everywhere, type 1 absent
    std::vector<std::vector<std::pair<std::pair<double, double>, int>>> data(5);
    for (auto& sec : data)
        for (int i = 0; i < 30; ++i) sec.push_back({{1.0 * i, 0.0}, 0});
    const auto t = table_from(data, 2);

    CHECK(stats::detectability(t, 1, 3, 1, 200, 7) == 0.0);
    CHECK(stats::detectability(t, 0, 1, 30, 200, 7) == 1.0);
    CHECK_THROWS_AS(stats::detectability(t, 0, 6, 1, 10, 7), std::invalid_argument);
}

TEST_CASE("detectability matches exact subset enumeration") {
    // per-section counts of the target type; M = 3 of 6 sections
    const std::vector<int> counts = {30, 0, 50, 10, 60, 5};
    const int M = 3, k = 60;
    std::vector<std::vector<std::pair<std::pair<double, double>, int>>> data(6);
    for (int s = 0; s < 6; ++s) {
        data[s].push_back({{-5.0, -5.0}, 1});  // keep empty sections present
        for (int i = 0; i < counts[s]; ++i) data[s].push_back({{1.0 * i, 0.0}, 0});
    }
    const auto t = table_from(data, 2);

    // exact fraction over all C(6,3) subsets
    int total = 0, success = 0;
    for (int mask = 0; mask < 64; ++mask) {
        if (__builtin_popcount(mask) != M) continue;
        ++total;
        int sum = 0;
        for (int s = 0; s < 6; ++s)
            if (mask & (1 << s)) sum += counts[s];
        if (sum >= k) ++success;
    }
    const double exact = static_cast<double>(success) / total;
    const int trials = 20000;
    const double mc = stats::detectability(t, 0, M, k, trials, 99);
    CHECK(std::abs(mc - exact) < 3.0 / std::sqrt(static_cast<double>(trials)));
}

TEST_CASE("detectability is monotone in M and k on shared seeds") {
    rng::Stream rs(15);
    std::vector<std::vector<std::pair<std::pair<double, double>, int>>> data(8);
    for (auto& sec : data) {
        const int n = static_cast<int>(rs.next_below(40));
        for (int i = 0; i < n; ++i) sec.push_back({{1.0 * i, 0.0}, 0});
    }
    const auto t = table_from(data, 1);
    const int trials = 500;
    double prev = -1.0;
    for (int M = 1; M <= 8; ++M) {
        const double f = stats::detectability(t, 0, M, 40, trials, 31);
        CHECK(f >= prev);
        prev = f;
    }
    prev = 2.0;
    for (int k = 10; k <= 100; k += 10) {
        const double f = stats::detectability(t, 0, 4, k, trials, 31);
        CHECK(f <= prev);
        prev = f;
    }
}

TEST_CASE("enrichment: no pairs inside a tiny radius") {
    auto t = table_from({{{{0, 0}, 0}, {{100, 0}, 1}, {{0, 100}, 1}}}, 2);
    const auto run = stats::neighborhood_enrichment(t.sections[0], 2, 0, 1.0, 100, 3);
    REQUIRE(!run.no_target_cells);
    for (const auto& r : run.per_partner) {
        CHECK(r.observed_count == 0);
        CHECK(r.degenerate_null);
        CHECK(r.z_score == 0.0);
    }
}

TEST_CASE("enrichment: no target cells is flagged") {
    auto t = table_from({{{{0, 0}, 1}, {{5, 0}, 1}}}, 2);
    const auto run = stats::neighborhood_enrichment(t.sections[0], 2, 0, 10.0, 50, 3);
    CHECK(run.no_target_cells);
    CHECK(run.per_partner.empty());
}

TEST_CASE("enrichment z-scores are invariant under rigid motion of the section") {
    SectionTable sec = random_section(120, 3, 200.0, 21);
    const auto base = stats::neighborhood_enrichment(sec, 3, 0, 30.0, 300, 5);

    SectionTable moved = sec;
    const double angle = 0.73, tx = 55.0, ty = -12.0;
    for (auto& c : moved.cells) {
        const double x = c.x, y = c.y;
        c.x = std::cos(angle) * x - std::sin(angle) * y + tx;
        c.y = std::sin(angle) * x + std::cos(angle) * y + ty;
    }
    const auto rot = stats::neighborhood_enrichment(moved, 3, 0, 30.0, 300, 5);
    for (int t = 0; t < 3; ++t) {
        CHECK(base.per_partner[t].observed_count == rot.per_partner[t].observed_count);
        CHECK(base.per_partner[t].z_score == doctest::Approx(rot.per_partner[t].z_score));
    }
}

TEST_CASE("parallel and serial enrichment agree bitwise") {
    SectionTable sec = random_section(150, 3, 250.0, 33);
    const auto a = stats::neighborhood_enrichment(sec, 3, 1, 25.0, 500, 11);
    const auto b = stats::neighborhood_enrichment_serial(sec, 3, 1, 25.0, 500, 11);
    for (int t = 0; t < 3; ++t) {
        CHECK(a.per_partner[t].z_score == b.per_partner[t].z_score);
        CHECK(a.per_partner[t].null_mean == b.per_partner[t].null_mean);
        CHECK(a.per_partner[t].null_std == b.per_partner[t].null_std);
    }
}

TEST_CASE("enrichment is calibrated under exchangeable labels") {
    // two exchangeable types at random positions: |z| should almost always
    // stay inside 3
    int extreme = 0;
    const int runs = 40;
    for (int run = 0; run < runs; ++run) {
        SectionTable sec = random_section(200, 2, 300.0, 1000 + run);
        const auto res = stats::neighborhood_enrichment(sec, 2, 0, 30.0, 300, 2000 + run);
        if (std::abs(res.per_partner[1].z_score) > 3.0) ++extreme;
    }
    CHECK(extreme <= 2);
}

TEST_CASE("pre-shuffling the labels leaves the null calibrated") {
    int extreme = 0;
    const int runs = 30;
    for (int run = 0; run < runs; ++run) {
        SectionTable sec = random_section(150, 2, 250.0, 5000 + run);
        // shuffle labels over fixed positions before the analysis
        rng::Stream rs(7000 + run);
        for (std::size_t i = sec.cells.size(); i > 1; --i)
            std::swap(sec.cells[i - 1].type, sec.cells[rs.next_below(i)].type);
        const auto res = stats::neighborhood_enrichment(sec, 2, 0, 30.0, 300, 9000 + run);
        if (std::abs(res.per_partner[1].z_score) > 3.0) ++extreme;
    }
    CHECK(extreme <= 2);
}

TEST_CASE("co-located clusters give a strongly positive z") {
    rng::Stream rs(77);
    SectionTable sec;
    sec.section_index = 0;
    sec.z = 0.0;
    int id = 0;
    auto add = [&](double cx, double cy, double spread, int type, int n) {
        for (int i = 0; i < n; ++i) {
            CellRecord c;
            c.id = "c" + std::to_string(id++);
            c.x = cx + rs.next_in(-spread, spread);
            c.y = cy + rs.next_in(-spread, spread);
            c.area = 25.0;
            c.type = type;
            sec.cells.push_back(std::move(c));
        }
    };
    add(0, 0, 4, 0, 20);       // target cluster
    add(5, 5, 4, 1, 20);       // partner cluster on top of it
    add(400, 400, 150, 2, 200);  // far-away background
    const auto res = stats::neighborhood_enrichment(sec, 3, 0, 30.0, 1000, 13);
    CHECK(res.per_partner[1].z_score > 2.0);
}

TEST_CASE("identical sections have exactly zero spread") {
    std::vector<std::vector<std::pair<std::pair<double, double>, int>>> data;
    std::vector<std::pair<std::pair<double, double>, int>> cells;
    rng::Stream rs(3);
    for (int i = 0; i < 80; ++i)
        cells.push_back({{rs.next_in(0, 100), rs.next_in(0, 100)},
                         static_cast<int>(rs.next_below(2))});
    data.push_back(cells);
    data.push_back(cells);
    data.push_back(cells);
    const auto t = table_from(data, 2);
    const auto prof = stats::section_stability_profile(t, 0, 20.0, 200, 9);
    REQUIRE(prof.spread_defined);
    for (int p = 0; p < 2; ++p) {
        CHECK(prof.iqr[p] == 0.0);
        for (double z : prof.z_by_partner[p]) CHECK(z == prof.z_by_partner[p][0]);
    }
}

TEST_CASE("single usable section leaves the spread undefined") {
    const auto t = table_from({{{{0, 0}, 0}, {{5, 5}, 1}}}, 2);
    const auto prof = stats::section_stability_profile(t, 0, 20.0, 100, 9);
    CHECK(!prof.spread_defined);
}

TEST_CASE("clustered volumes destabilize section enrichment relative to mixed ones") {
    // sections cut from a clustered simulation vs a well-mixed one
    // near-critical self-affinity: sections differ most when domains are at
    // the section scale (strong coupling saturates every section instead)
    const LatticeSpec spec{16, 16, 8, Neighborhood::N26};
    SquareMatrix B0(2);
    SquareMatrix Bc(2);
    Bc.at(0, 0) = Bc.at(1, 1) = 0.15;
    const auto mixed = mrf::MRFParams::make({0.0, 0.0}, B0, 0.0);
    const auto clustered = mrf::MRFParams::make({0.0, 0.0}, Bc, 0.0);

    std::vector<double> iqr_mixed, iqr_clustered;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        for (const bool cl : {false, true}) {
            const auto vol =
                mrf::gibbs_sample(spec, cl ? clustered : mixed, 30, seed);
            const auto table = volume_to_cell_table(vol, 2, 10.0);
            const auto prof = stats::section_stability_profile(table, 0, 15.0, 150, seed);
            if (!prof.spread_defined) continue;
            (cl ? iqr_clustered : iqr_mixed).push_back(prof.iqr[1]);
        }
    }
    CHECK(median(iqr_clustered) > median(iqr_mixed));
}

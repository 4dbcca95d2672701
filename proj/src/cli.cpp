#include "cellstack/cli.hpp"

#include <algorithm>
#include <iostream>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "cellstack/advisory.hpp"
#include "cellstack/io.hpp"
#include "cellstack/parallel.hpp"
#include "cellstack/structures.hpp"

using nlohmann::json;

namespace cellstack::cli {

namespace {

using io::ConfigError;
using io::NumericError;
using io::SchemaError;

json parse_config(const std::string& path) {
    const std::string text = io::read_text(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        // anchor the message to a line number
        std::size_t line = 1;
        for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i)
            if (text[i] == '\n') ++line;
        throw ConfigError(path + ":" + std::to_string(line) + ": " + e.what());
    }
}

const json& require_block(const json& root, const std::string& name) {
    static const std::set<std::string> known = {"simulate",    "sample",   "estimate",
                                                "stats",       "reconstruct", "evaluate",
                                                "structures",  "advise"};
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    for (const auto& [key, value] : root.items())
        if (!known.count(key)) throw ConfigError("unknown top-level config key '" + key + "'");
    if (!root.contains(name))
        throw ConfigError("config has no '" + name + "' block");
    return root.at(name);
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& ctx) {
    if (!obj.is_object()) throw ConfigError(ctx + ": expected a JSON object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key)) throw ConfigError(ctx + ": unknown key '" + key + "'");
}

double get_num(const json& obj, const std::string& key, const std::string& ctx,
               std::optional<double> lo = {}, std::optional<double> hi = {}) {
    if (!obj.contains(key)) throw ConfigError(ctx + ": missing key '" + key + "'");
    if (!obj.at(key).is_number()) throw ConfigError(ctx + ": '" + key + "' must be a number");
    const double v = obj.at(key).get<double>();
    if ((lo && v < *lo) || (hi && v > *hi))
        throw ConfigError(ctx + ": '" + key + "' out of range");
    return v;
}

double get_num_or(const json& obj, const std::string& key, double fallback,
                  const std::string& ctx, std::optional<double> lo = {},
                  std::optional<double> hi = {}) {
    if (!obj.contains(key)) return fallback;
    return get_num(obj, key, ctx, lo, hi);
}

std::string get_str(const json& obj, const std::string& key, const std::string& ctx) {
    if (!obj.contains(key) || !obj.at(key).is_string())
        throw ConfigError(ctx + ": missing string key '" + key + "'");
    return obj.at(key).get<std::string>();
}

std::uint64_t get_seed(const json& obj, const std::string& ctx) {
    if (!obj.contains("seed")) throw ConfigError(ctx + ": missing key 'seed'");
    if (!obj.at("seed").is_number_unsigned())
        throw ConfigError(ctx + ": 'seed' must be a nonnegative integer");
    return obj.at("seed").get<std::uint64_t>();
}

mrf::MRFParams params_from_json(const json& obj, const std::string& ctx) {
    const int K = static_cast<int>(get_num(obj, "K", ctx, 2, 255));
    if (!obj.contains("alpha") || !obj.at("alpha").is_array() ||
        obj.at("alpha").size() != static_cast<std::size_t>(K))
        throw ConfigError(ctx + ": 'alpha' must be an array of K numbers");
    std::vector<double> alpha = obj.at("alpha").get<std::vector<double>>();
    if (!obj.contains("B") || !obj.at("B").is_array() ||
        obj.at("B").size() != static_cast<std::size_t>(K))
        throw ConfigError(ctx + ": 'B' must be a K x K array");
    SquareMatrix B(K);
    for (int r = 0; r < K; ++r) {
        const auto& row = obj.at("B").at(r);
        if (!row.is_array() || row.size() != static_cast<std::size_t>(K))
            throw ConfigError(ctx + ": 'B' must be a K x K array");
        for (int c = 0; c < K; ++c) B.at(r, c) = row.at(c).get<double>();
    }
    const double lambda = get_num_or(obj, "lambda", 1e-3, ctx, 0.0);
    try {
        return mrf::MRFParams::make(std::move(alpha), std::move(B), lambda);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(ctx + ": " + e.what());
    }
}

LatticeSpec spec_from_json(const json& obj, const std::string& ctx) {
    if (!obj.contains("dims") || !obj.at("dims").is_array() || obj.at("dims").size() != 3)
        throw ConfigError(ctx + ": 'dims' must be [nx, ny, nz]");
    LatticeSpec spec;
    spec.nx = obj.at("dims").at(0).get<int>();
    spec.ny = obj.at("dims").at(1).get<int>();
    spec.nz = obj.at("dims").at(2).get<int>();
    if (obj.contains("neighborhood"))
        spec.neighborhood = neighborhood_from_string(obj.at("neighborhood").get<std::string>());
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(ctx + ": " + e.what());
    }
    return spec;
}

int resolve_type(const CellTable& table, const std::string& name, const std::string& ctx) {
    const int t = table.types.lookup(name);
    if (t < 0) throw ConfigError(ctx + ": unknown cell type '" + name + "'");
    return t;
}

// ----------------------------------------------------------- subcommands

int cmd_simulate(const json& block, const std::string& config_hash) {
    const std::string ctx = "simulate";
    check_keys(block, {"dims", "neighborhood", "K", "alpha", "B", "lambda", "sweeps", "seed",
                       "out"}, ctx);
    const LatticeSpec spec = spec_from_json(block, ctx);
    const mrf::MRFParams params = params_from_json(block, ctx);
    const int sweeps = static_cast<int>(get_num(block, "sweeps", ctx, 0));
    const std::uint64_t seed = get_seed(block, ctx);
    const std::string out = get_str(block, "out", ctx);

    const LabelVolume vol = mrf::gibbs_sample(spec, params, sweeps, seed);
    io::write_volume(out, vol, params.K);
    io::write_sidecar(out, "cellstack.volume.v1", seed, config_hash);
    std::cout << "simulate: wrote " << out << " (" << spec.nx << "x" << spec.ny << "x" << spec.nz
              << ", K=" << params.K << ")\n";
    return 0;
}

int cmd_sample(const json& block, const std::string& config_hash) {
    const std::string ctx = "sample";
    check_keys(block, {"volume", "geometry", "M", "seed", "z0", "delta_z", "count", "out"}, ctx);
    const std::string vol_path = get_str(block, "volume", ctx);
    int K = 0;
    const LabelVolume vol = io::read_volume(vol_path, K);
    const std::string geometry = get_str(block, "geometry", ctx);
    const std::string out = get_str(block, "out", ctx);

    geom::ObservationSet obs;
    std::uint64_t seed = 0;
    if (geometry == "independent2d") {
        const int M = static_cast<int>(get_num(block, "M", ctx, 1));
        seed = get_seed(block, ctx);
        obs = geom::sample_independent_planes(vol.spec, M, seed);
    } else if (geometry == "serial3d") {
        const int z0 = static_cast<int>(get_num(block, "z0", ctx, 0));
        const int delta_z = static_cast<int>(get_num(block, "delta_z", ctx, 1));
        const int count = static_cast<int>(get_num(block, "count", ctx, 1));
        obs = geom::sample_serial_stack(vol.spec, z0, delta_z, count);
    } else if (geometry == "full") {
        obs = geom::full_volume(vol.spec);
    } else {
        throw ConfigError(ctx + ": geometry must be independent2d, serial3d or full");
    }
    io::write_observation_set(out, obs, vol.spec);
    io::write_sidecar(out, "cellstack.observations.v1", seed, config_hash);
    std::cout << "sample: wrote " << out << " (" << obs.plane_zs.size() << " planes, budget "
              << obs.budget << ")\n";
    return 0;
}

mple::MPLEConfig estimator_config(const json& block, const std::string& ctx) {
    mple::MPLEConfig cfg;
    cfg.lambda = get_num_or(block, "lambda", cfg.lambda, ctx, 0.0);
    cfg.max_iters = static_cast<int>(get_num_or(block, "max_iters", cfg.max_iters, ctx, 1));
    cfg.grad_tolerance =
        get_num_or(block, "grad_tolerance", cfg.grad_tolerance, ctx, 1e-15);
    if (block.contains("optimizer")) {
        const std::string opt = block.at("optimizer").get<std::string>();
        if (opt == "lbfgs")
            cfg.optimizer = mple::MPLEConfig::Optimizer::LbfgsLike;
        else if (opt == "gd")
            cfg.optimizer = mple::MPLEConfig::Optimizer::GradientDescent;
        else
            throw ConfigError(ctx + ": optimizer must be 'lbfgs' or 'gd'");
    }
    return cfg;
}

int cmd_estimate(const json& block, const std::string& config_hash) {
    const std::string ctx = "estimate";
    check_keys(block, {"volume", "observations", "truth", "lambda", "max_iters",
                       "grad_tolerance", "optimizer", "study", "out"}, ctx);
    const std::string out = get_str(block, "out", ctx);
    const mple::MPLEConfig est = estimator_config(block, ctx);
    std::vector<mple::RecoveryReport> rows;
    std::uint64_t sidecar_seed = 0;
    bool any_nonconverged = false;

    if (block.contains("study")) {
        const json& st = block.at("study");
        check_keys(st, {"dims", "neighborhood", "K", "alpha", "B", "lambda", "sweeps", "seeds",
                        "planes", "delta_z"}, ctx + ".study");
        mple::StudyConfig cfg;
        cfg.spec = spec_from_json(st, ctx + ".study");
        cfg.truth = params_from_json(st, ctx + ".study");
        cfg.sweeps = static_cast<int>(get_num(st, "sweeps", ctx, 0));
        cfg.planes = static_cast<int>(get_num(st, "planes", ctx, 1));
        cfg.delta_z = static_cast<int>(get_num_or(st, "delta_z", 1, ctx, 1));
        cfg.estimator = est;
        if (!st.contains("seeds") || !st.at("seeds").is_array() || st.at("seeds").empty())
            throw ConfigError(ctx + ".study: 'seeds' must be a nonempty array");
        const auto seeds = st.at("seeds").get<std::vector<std::uint64_t>>();
        sidecar_seed = seeds.front();
        rows = mple::run_recovery_study(cfg, seeds);
    } else {
        const std::string vol_path = get_str(block, "volume", ctx);
        int K = 0;
        const LabelVolume vol = io::read_volume(vol_path, K);
        if (!block.contains("observations") || !block.at("observations").is_array() ||
            block.at("observations").empty())
            throw ConfigError(ctx + ": 'observations' must be a nonempty array of paths");
        if (!block.contains("truth"))
            throw ConfigError(ctx + ": 'truth' {K, alpha, B} is required to score recovery");
        const mrf::MRFParams truth = params_from_json(block.at("truth"), ctx + ".truth");
        if (truth.K != K) throw ConfigError(ctx + ": truth K differs from the volume's K");
        sidecar_seed = vol.seed;
        for (const auto& op : block.at("observations")) {
            const geom::ObservationSet obs =
                io::read_observation_set(op.get<std::string>(), vol.spec);
            const mple::FitResult fr = mple::fit(vol, obs, K, est);
            if (!fr.converged) any_nonconverged = true;
            mple::RecoveryReport r = mple::recovery_error(fr.params, truth);
            r.geometry = obs.geometry;
            r.seed = obs.seed != 0 ? obs.seed : vol.seed;
            r.budget = obs.budget;
            rows.push_back(r);
        }
    }

    io::atomic_write_text(out, io::recovery_csv(rows));
    io::write_sidecar(out, "cellstack.recovery.v1", sidecar_seed, config_hash);
    std::cout << "estimate: wrote " << out << " (" << rows.size() << " rows)\n";
    if (any_nonconverged)
        std::cout << "estimate: warning: at least one fit stopped before the gradient "
                     "tolerance\n";
    return 0;
}

int cmd_stats(const json& block, const std::string& config_hash) {
    const std::string ctx = "stats";
    check_keys(block, {"cells", "target_type", "radius", "permutations", "seed", "detect",
                       "out_enrichment", "out_stability", "out_detectability", "out_abundance"},
               ctx);
    const CellTable table = io::read_cells_csv(get_str(block, "cells", ctx));
    const std::uint64_t seed = get_seed(block, ctx);
    const double radius = get_num_or(block, "radius", 30.0, ctx, 1e-12);
    const int n_perm = static_cast<int>(get_num_or(block, "permutations", 1000, ctx, 1));

    if (block.contains("out_abundance")) {
        const auto frac = stats::abundance(table);
        std::ostringstream os;
        os << "type,fraction\n";
        for (int t = 0; t < table.types.size(); ++t)
            os << table.types.name(t) << ',' << io::format_double(frac[t]) << '\n';
        const std::string out = get_str(block, "out_abundance", ctx);
        io::atomic_write_text(out, os.str());
        io::write_sidecar(out, "cellstack.abundance.v1", seed, config_hash);
    }

    if (block.contains("out_enrichment") || block.contains("out_stability")) {
        const int target = resolve_type(table, get_str(block, "target_type", ctx), ctx);
        std::vector<std::pair<int, stats::EnrichmentResult>> rows;
        const stats::StabilityProfile prof =
            stats::section_stability_profile(table, target, radius, n_perm, seed);
        // re-run per section to emit full result rows in section order
        for (const auto& sec : table.sections) {
            const auto run =
                stats::neighborhood_enrichment(sec, table.types.size(), target, radius, n_perm, seed);
            if (run.no_target_cells) continue;
            for (const auto& r : run.per_partner) rows.push_back({sec.section_index, r});
        }
        if (block.contains("out_enrichment")) {
            const std::string out = get_str(block, "out_enrichment", ctx);
            io::atomic_write_text(out, io::enrichment_csv(table.types, rows));
            io::write_sidecar(out, "cellstack.enrichment.v1", seed, config_hash);
        }
        if (block.contains("out_stability")) {
            std::ostringstream os;
            os << "partner_type,sections_used,iqr,frac_beyond_2,spread_defined\n";
            for (int t = 0; t < table.types.size(); ++t)
                os << table.types.name(t) << ',' << prof.sections.size() << ','
                   << io::format_double(prof.iqr[t]) << ','
                   << io::format_double(prof.frac_beyond_2[t]) << ','
                   << (prof.spread_defined ? 1 : 0) << '\n';
            const std::string out = get_str(block, "out_stability", ctx);
            io::atomic_write_text(out, os.str());
            io::write_sidecar(out, "cellstack.stability.v1", seed, config_hash);
        }
    }

    if (block.contains("detect")) {
        const json& det = block.at("detect");
        check_keys(det, {"types", "M", "k", "trials"}, ctx + ".detect");
        const int M = static_cast<int>(get_num(det, "M", ctx, 1));
        const int k = static_cast<int>(get_num(det, "k", ctx, 1));
        const int trials = static_cast<int>(get_num(det, "trials", ctx, 1));
        std::vector<int> types;
        if (!det.contains("types") || (det.at("types").is_string() && det.at("types") == "all")) {
            for (int t = 0; t < table.types.size(); ++t) types.push_back(t);
        } else {
            for (const auto& name : det.at("types"))
                types.push_back(resolve_type(table, name.get<std::string>(), ctx));
        }
        std::vector<std::tuple<std::string, int, int, double>> rows;
        for (int t : types)
            rows.push_back({table.types.name(t), M, k,
                            stats::detectability(table, t, M, k, trials, seed)});
        const std::string out = get_str(block, "out_detectability", ctx);
        io::atomic_write_text(out, io::detectability_csv(rows));
        io::write_sidecar(out, "cellstack.detectability.v1", seed, config_hash);
    }
    std::cout << "stats: done\n";
    return 0;
}

int cmd_reconstruct(const json& block, const std::string& config_hash) {
    const std::string ctx = "reconstruct";
    check_keys(block, {"cells", "delta_z", "kappa", "min_count", "out", "out_matches"}, ctx);
    const CellTable table = io::read_cells_csv(get_str(block, "cells", ctx));
    const double delta_z = get_num(block, "delta_z", ctx, 1e-12);
    const double kappa = get_num_or(block, "kappa", 1.0, ctx, 1e-12);
    const int min_count = static_cast<int>(get_num_or(block, "min_count", 20, ctx, 1));

    const match::SizeStats stats = match::compute_size_stats(table, min_count);
    const match::Reconstruction rec = match::reconstruct(table, stats, delta_z, kappa);

    const std::string out = get_str(block, "out", ctx);
    io::atomic_write_text(out, io::cloud_csv(table.types, rec.points));
    io::write_sidecar(out, "cellstack.cloud.v1", 0, config_hash);

    if (block.contains("out_matches")) {
        json audit = json::array();
        for (std::size_t c = 0; c < rec.chains.size(); ++c) {
            const auto& ch = rec.chains[c];
            json cj;
            cj["chain"] = c;
            cj["provenance"] = ch.is_shared() ? "SC" : "LC";
            cj["split_flagged"] = ch.split_flagged;
            cj["members"] = json::array();
            for (const auto& cell : ch.cells) cj["members"].push_back(cell.id);
            cj["link_costs"] = ch.link_costs;
            audit.push_back(std::move(cj));
        }
        const std::string mout = get_str(block, "out_matches", ctx);
        io::atomic_write_text(mout, audit.dump(2) + "\n");
        io::write_sidecar(mout, "cellstack.matches.v1", 0, config_hash);
    }
    std::cout << "reconstruct: wrote " << out << " (" << rec.points.size() << " points from "
              << table.total_cells() << " cross-sections)\n";
    return 0;
}

stackeval::ReferenceStack reference_from_block(const json& block, const std::string& ctx) {
    if (block.contains("synth")) {
        const json& sy = block.at("synth");
        check_keys(sy, {"n_cells", "types", "lx", "ly", "lz", "seed", "min_gap_factor"},
                   ctx + ".synth");
        stackeval::SphereStackConfig cfg;
        cfg.n_cells = static_cast<int>(get_num(sy, "n_cells", ctx, 1));
        cfg.lx = get_num_or(sy, "lx", cfg.lx, ctx, 1.0);
        cfg.ly = get_num_or(sy, "ly", cfg.ly, ctx, 1.0);
        cfg.lz = get_num_or(sy, "lz", cfg.lz, ctx, 1.0);
        cfg.base_dz = get_num(block, "base_dz", ctx, 1e-12);
        cfg.min_gap_factor = get_num_or(sy, "min_gap_factor", cfg.min_gap_factor, ctx, 0.0);
        cfg.types.clear();
        if (!sy.contains("types") || !sy.at("types").is_array() || sy.at("types").empty())
            throw ConfigError(ctx + ".synth: 'types' must be a nonempty array");
        for (const auto& t : sy.at("types")) {
            check_keys(t, {"name", "r_min", "r_max"}, ctx + ".synth.types");
            stackeval::SphereType st;
            st.name = get_str(t, "name", ctx);
            st.r_min = get_num(t, "r_min", ctx, 1e-12);
            st.r_max = get_num(t, "r_max", ctx, st.r_min);
            cfg.types.push_back(std::move(st));
        }
        return stackeval::synth_sphere_stack(cfg, get_seed(sy, ctx + ".synth"));
    }
    // external dense stack in the cell CSV schema with true_volume_id
    const CellTable table = io::read_cells_csv(get_str(block, "cells", ctx));
    for (const auto& sec : table.sections)
        for (const auto& c : sec.cells)
            if (c.true_id < 0)
                throw SchemaError(ctx + ": reference stack requires a true_volume_id column");
    stackeval::ReferenceStack ref;
    ref.base_dz = get_num(block, "base_dz", ctx, 1e-12);
    // reference centroids: area-weighted means over each id's cross-sections
    std::map<long long, std::array<double, 5>> acc;  // w, wx, wy, wz, max_area
    std::map<long long, int> id_type;
    for (const auto& sec : table.sections)
        for (const auto& c : sec.cells) {
            auto& a = acc[c.true_id];
            a[0] += c.area;
            a[1] += c.area * c.x;
            a[2] += c.area * c.y;
            a[3] += c.area * c.z;
            a[4] = std::max(a[4], c.area);
            id_type[c.true_id] = c.type;
        }
    for (const auto& [id, a] : acc) {
        stackeval::TrueCell tc;
        tc.id = id;
        tc.type = id_type[id];
        tc.x = a[1] / a[0];
        tc.y = a[2] / a[0];
        tc.z = a[3] / a[0];
        tc.radius = std::sqrt(a[4] / 3.14159265358979323846);
        ref.cells.push_back(tc);
    }
    ref.table = table;
    return ref;
}

int cmd_evaluate(const json& block, const std::string& config_hash) {
    const std::string ctx = "evaluate";
    check_keys(block, {"cells", "synth", "base_dz", "delta_z_list", "kappa", "min_count", "out",
                       "out_histogram"}, ctx);
    const stackeval::ReferenceStack ref = reference_from_block(block, ctx);
    if (!block.contains("delta_z_list") || !block.at("delta_z_list").is_array() ||
        block.at("delta_z_list").empty())
        throw ConfigError(ctx + ": 'delta_z_list' must be a nonempty array");
    stackeval::EvalConfig cfg;
    cfg.kappa = get_num_or(block, "kappa", cfg.kappa, ctx, 1e-12);
    cfg.min_count = static_cast<int>(get_num_or(block, "min_count", cfg.min_count, ctx, 1));

    std::vector<stackeval::CoverageReport> all;
    std::ostringstream hist;
    hist << "delta_z,offset,loc_error\n";
    for (const auto& dz : block.at("delta_z_list")) {
        const double delta_z = dz.get<double>();
        const auto reports =
            stackeval::evaluate(ref, delta_z, stackeval::all_offsets(ref, delta_z), cfg);
        for (const auto& r : reports) {
            for (double e : r.loc_errors)
                if (r.offset >= 0)
                    hist << io::format_double(r.delta_z) << ',' << r.offset << ','
                         << io::format_double(e) << '\n';
            all.push_back(r);
        }
    }
    const std::string out = get_str(block, "out", ctx);
    io::atomic_write_text(out, io::coverage_csv(all));
    io::write_sidecar(out, "cellstack.coverage.v1", 0, config_hash);
    if (block.contains("out_histogram")) {
        const std::string hout = get_str(block, "out_histogram", ctx);
        io::atomic_write_text(hout, hist.str());
        io::write_sidecar(hout, "cellstack.lochist.v1", 0, config_hash);
    }
    std::cout << "evaluate: wrote " << out << " (" << all.size() << " rows)\n";
    return 0;
}

int cmd_structures(const json& block, const std::string& config_hash) {
    const std::string ctx = "structures";
    check_keys(block, {"cells", "delta_z", "kappa", "min_count", "type_filter", "link_radius",
                       "band_radius", "bins", "profile", "queries", "out_structures",
                       "out_distances", "out_profiles"}, ctx);
    const CellTable table = io::read_cells_csv(get_str(block, "cells", ctx));
    const double delta_z = get_num(block, "delta_z", ctx, 1e-12);
    const double kappa = get_num_or(block, "kappa", 1.0, ctx, 1e-12);
    const int min_count = static_cast<int>(get_num_or(block, "min_count", 20, ctx, 1));
    const int filter = resolve_type(table, get_str(block, "type_filter", ctx), ctx);

    const match::SizeStats stats = match::compute_size_stats(table, min_count);
    const match::Reconstruction rec = match::reconstruct(table, stats, delta_z, kappa);

    double link_radius = 2.0 * stats.of(filter).r_median;  // default: 2 x median radius
    if (block.contains("link_radius") && block.at("link_radius").is_number())
        link_radius = get_num(block, "link_radius", ctx, 1e-12);
    else if (block.contains("link_radius") && block.at("link_radius") != "auto")
        throw ConfigError(ctx + ": link_radius must be a number or \"auto\"");

    const auto structures = structure::build_structures(rec.points, filter, link_radius);
    {
        std::ostringstream os;
        os << "structure_id,n_members,member_ids,axis_x,axis_y,axis_z,origin_x,origin_y,origin_z,"
              "extent\n";
        for (const auto& st : structures) {
            os << st.structure_id << ',' << st.members.size() << ',';
            for (std::size_t m = 0; m < st.members.size(); ++m)
                os << (m ? ";" : "") << rec.points[st.members[m]].cell_id;
            os << ',' << io::format_double(st.axis[0]) << ',' << io::format_double(st.axis[1])
               << ',' << io::format_double(st.axis[2]) << ',' << io::format_double(st.origin[0])
               << ',' << io::format_double(st.origin[1]) << ',' << io::format_double(st.origin[2])
               << ',' << io::format_double(st.extent) << '\n';
        }
        const std::string out = get_str(block, "out_structures", ctx);
        io::atomic_write_text(out, os.str());
        io::write_sidecar(out, "cellstack.structures.v1", 0, config_hash);
    }

    if (block.contains("queries") && block.contains("out_distances")) {
        std::ostringstream os;
        os << "query,cell_id,section,d2d,d3d,d2d_defined\n";
        for (const auto& q : block.at("queries")) {
            check_keys(q, {"source_type", "target_type", "target_structure"}, ctx + ".queries");
            const int src = resolve_type(table, get_str(q, "source_type", ctx), ctx);
            structure::TargetSpec spec;
            if (q.contains("target_type")) {
                spec.type = resolve_type(table, get_str(q, "target_type", ctx), ctx);
                spec.description = table.types.name(src) + "->" + table.types.name(spec.type);
            } else if (q.contains("target_structure")) {
                const int sid = static_cast<int>(get_num(q, "target_structure", ctx, 0));
                if (sid >= static_cast<int>(structures.size()))
                    throw ConfigError(ctx + ": target_structure index out of range");
                for (int m : structures[sid].members)
                    for (const auto& cell : rec.chains[m].cells) spec.ids.push_back(cell.id);
                spec.description =
                    table.types.name(src) + "->structure" + std::to_string(sid);
            } else {
                throw ConfigError(ctx + ": query needs target_type or target_structure");
            }
            const auto cmp = structure::compare_distances(table, src, spec);
            for (const auto& pr : cmp.per_cell)
                os << cmp.description << ',' << pr.cell_id << ',' << pr.section << ','
                   << io::format_double(pr.d2d) << ',' << io::format_double(pr.d3d) << ','
                   << (pr.d2d_defined ? 1 : 0) << '\n';
        }
        const std::string out = get_str(block, "out_distances", ctx);
        io::atomic_write_text(out, os.str());
        io::write_sidecar(out, "cellstack.distances.v1", 0, config_hash);
    }

    if (block.contains("out_profiles")) {
        const double band = get_num_or(block, "band_radius", link_radius, ctx, 1e-12);
        const int bins = static_cast<int>(get_num_or(block, "bins", 10, ctx, 2));
        const auto mode = block.value("profile", std::string("composition"));
        if (mode != "composition" && mode != "density")
            throw ConfigError(ctx + ": profile must be 'composition' or 'density'");
        std::ostringstream os;
        os << "structure_id,bin,arc_coord,type,value\n";
        for (const auto& st : structures) {
            if (st.members.size() < 3 || !(st.extent > 0.0)) continue;
            const auto prof = structure::along_structure_profile(
                st, rec.points, table.types.size(), band, bins,
                mode == "composition" ? structure::ProfileValue::Composition
                                      : structure::ProfileValue::Density);
            for (std::size_t b = 0; b < prof.size(); ++b)
                for (int t = 0; t < table.types.size(); ++t)
                    os << st.structure_id << ',' << b << ','
                       << io::format_double(prof[b].arc_coord) << ',' << table.types.name(t)
                       << ',' << io::format_double(prof[b].value[t]) << '\n';
        }
        const std::string out = get_str(block, "out_profiles", ctx);
        io::atomic_write_text(out, os.str());
        io::write_sidecar(out, "cellstack.profiles.v1", 0, config_hash);
    }
    std::cout << "structures: " << structures.size() << " components\n";
    return 0;
}

int cmd_advise(const json& block, const std::string& config_hash) {
    const std::string ctx = "advise";
    check_keys(block, {"recovery", "stability", "thresholds", "out"}, ctx);
    advisory::Thresholds th;
    if (block.contains("thresholds")) {
        const json& t = block.at("thresholds");
        check_keys(t, {"alpha_ratio_max", "b_ratio_min", "iqr_high"}, ctx + ".thresholds");
        th.alpha_ratio_max = get_num_or(t, "alpha_ratio_max", th.alpha_ratio_max, ctx, 0.0);
        th.b_ratio_min = get_num_or(t, "b_ratio_min", th.b_ratio_min, ctx, 0.0);
        th.iqr_high = get_num_or(t, "iqr_high", th.iqr_high, ctx, 0.0);
    }

    std::vector<mple::RecoveryReport> rows;
    if (block.contains("recovery")) {
        const std::string path = get_str(block, "recovery", ctx);
        std::istringstream in(io::read_text(path));
        std::string line;
        if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
        if (line != "geometry,seed,budget,mae_alpha,rmse_alpha,mae_B,rmse_B")
            throw SchemaError(path + ": unexpected recovery CSV header");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string geometry, field;
            mple::RecoveryReport r;
            std::getline(ls, geometry, ',');
            r.geometry = geom::geometry_from_string(geometry);
            std::getline(ls, field, ',');
            r.seed = std::stoull(field);
            std::getline(ls, field, ',');
            r.budget = std::stoll(field);
            std::getline(ls, field, ',');
            r.mae_alpha = std::stod(field);
            std::getline(ls, field, ',');
            r.rmse_alpha = std::stod(field);
            std::getline(ls, field, ',');
            r.mae_B = std::stod(field);
            std::getline(ls, field, ',');
            r.rmse_B = std::stod(field);
            rows.push_back(r);
        }
    }

    std::optional<double> median_iqr;
    if (block.contains("stability")) {
        const std::string path = get_str(block, "stability", ctx);
        std::istringstream in(io::read_text(path));
        std::string line;
        if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
        if (line.rfind("partner_type,", 0) != 0)
            throw SchemaError(path + ": unexpected stability CSV header");
        std::vector<double> iqrs;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string field;
            std::getline(ls, field, ',');  // partner
            std::getline(ls, field, ',');  // sections_used
            std::getline(ls, field, ',');  // iqr
            iqrs.push_back(std::stod(field));
        }
        if (!iqrs.empty()) median_iqr = median(iqrs);
    }

    const advisory::AdvisoryReport rep = advisory::advise(rows, median_iqr, th);
    const std::string out = get_str(block, "out", ctx);
    io::atomic_write_text(out, advisory::to_json(rep));
    io::write_sidecar(out, "cellstack.advisory.v1", 0, config_hash);
    std::cout << "advise: wrote " << out << '\n';
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"cellstack: sampling-geometry diagnostics and sparse serial-section "
                 "reconstruction for cell-resolved tissue data"};
    app.require_subcommand(1);

    std::string config_path;
    int threads = 0;
    struct Sub {
        const char* name;
        const char* desc;
        int (*fn)(const json&, const std::string&);
    };
    const std::vector<Sub> subs = {
        {"simulate", "sample a label volume from the lattice tissue model", cmd_simulate},
        {"sample", "extract a matched-budget observation set from a volume", cmd_sample},
        {"estimate", "fit (alpha, B) by regularized MPLE and score recovery", cmd_estimate},
        {"stats", "section statistics: abundance, detectability, enrichment", cmd_stats},
        {"reconstruct", "link cross-sections into chains and estimate 3D centroids",
         cmd_reconstruct},
        {"evaluate", "coverage/localization versus a dense reference stack", cmd_evaluate},
        {"structures", "3D structures, 2D-vs-3D distances, axis profiles", cmd_structures},
        {"advise", "acquisition-geometry advisory from measured stability gaps", cmd_advise},
    };
    for (const auto& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.desc);
        sub->add_option("--config", config_path, "experiment config (JSON)")->required();
        sub->add_option("--threads", threads, "worker threads (default: all)");
    }

    std::vector<const char*> argv;
    argv.push_back("cellstack");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (threads > 0) par::set_threads(threads);

    try {
        const json root = parse_config(config_path);
        for (const auto& s : subs)
            if (app.got_subcommand(s.name)) {
                const json& block = require_block(root, s.name);
                return s.fn(block, io::fnv1a_hex(block.dump()));
            }
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << '\n';
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 4;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace cellstack::cli

#include "cellstack/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace cellstack::io {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void atomic_write_text(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_sidecar(const std::string& path, const std::string& schema, std::uint64_t seed,
                   const std::string& config_hash) {
    json j;
    j["schema"] = schema;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    atomic_write_text(path + ".meta.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------- volumes

void write_volume(const std::string& path, const LabelVolume& volume, int num_types) {
    volume.validate(num_types);
    std::string bytes(volume.labels.size(), '\0');
    for (std::size_t i = 0; i < volume.labels.size(); ++i)
        bytes[i] = static_cast<char>(volume.labels[i] + 1);  // 1-based on disk
    atomic_write_text(path, bytes);

    json j;
    j["schema"] = "cellstack.volume.v1";
    j["dims"] = {volume.spec.nx, volume.spec.ny, volume.spec.nz};
    j["K"] = num_types;
    j["neighborhood"] = to_string(volume.spec.neighborhood);
    j["seed"] = volume.seed;
    atomic_write_text(path + ".json", j.dump(2) + "\n");
}

LabelVolume read_volume(const std::string& path, int& num_types) {
    json j;
    try {
        j = json::parse(read_text(path + ".json"));
    } catch (const json::parse_error& e) {
        throw SchemaError("volume sidecar is not valid JSON: " + std::string(e.what()));
    }
    if (!j.contains("schema") || j["schema"] != "cellstack.volume.v1")
        throw SchemaError("volume sidecar: unsupported schema version");
    LabelVolume vol;
    vol.spec.nx = j.at("dims").at(0).get<int>();
    vol.spec.ny = j.at("dims").at(1).get<int>();
    vol.spec.nz = j.at("dims").at(2).get<int>();
    vol.spec.neighborhood = neighborhood_from_string(j.at("neighborhood").get<std::string>());
    vol.seed = j.at("seed").get<std::uint64_t>();
    num_types = j.at("K").get<int>();

    const std::string bytes = read_text(path);
    if (static_cast<std::int64_t>(bytes.size()) != vol.spec.size())
        throw SchemaError("volume file size does not match sidecar dims");
    vol.labels.resize(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const int label = static_cast<unsigned char>(bytes[i]);
        if (label < 1 || label > num_types)
            throw SchemaError("volume file: label outside 1..K at voxel " + std::to_string(i));
        vol.labels[i] = static_cast<std::uint8_t>(label - 1);
    }
    return vol;
}

// ------------------------------------------------------- observation sets

void write_observation_set(const std::string& json_path, const geom::ObservationSet& obs,
                           const LatticeSpec& spec) {
    json j;
    j["schema"] = "cellstack.observations.v1";
    j["geometry"] = geom::to_string(obs.geometry);
    j["plane_zs"] = obs.plane_zs;
    j["delta_z"] = obs.delta_z;
    j["budget"] = obs.budget;
    j["seed"] = obs.seed;
    j["dims"] = {spec.nx, spec.ny, spec.nz};
    atomic_write_text(json_path, j.dump(2) + "\n");

    std::ostringstream csv;
    csv << "i,j,k\n";
    for (const Site& s : obs.observed_sites(spec))
        csv << s.i << ',' << s.j << ',' << s.k << '\n';
    atomic_write_text(json_path + ".sites.csv", csv.str());
}

geom::ObservationSet read_observation_set(const std::string& json_path, const LatticeSpec& spec) {
    json j;
    try {
        j = json::parse(read_text(json_path));
    } catch (const json::parse_error& e) {
        throw SchemaError("observation set is not valid JSON: " + std::string(e.what()));
    }
    if (!j.contains("schema") || j["schema"] != "cellstack.observations.v1")
        throw SchemaError("observation set: unsupported schema version");
    geom::ObservationSet obs;
    obs.geometry = geom::geometry_from_string(j.at("geometry").get<std::string>());
    obs.plane_zs = j.at("plane_zs").get<std::vector<int>>();
    obs.delta_z = j.at("delta_z").get<int>();
    obs.seed = j.at("seed").get<std::uint64_t>();
    obs.plane_mask.assign(spec.nz, 0);
    for (int z : obs.plane_zs) {
        if (z < 0 || z >= spec.nz) throw SchemaError("observation set: plane outside volume");
        obs.plane_mask[z] = 1;
    }
    obs.budget = static_cast<std::int64_t>(obs.plane_zs.size()) * spec.nx * spec.ny;
    if (j.contains("budget") && j.at("budget").get<std::int64_t>() != obs.budget)
        throw SchemaError("observation set: budget does not match plane count");
    return obs;
}

// ------------------------------------------------------------ cell tables

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, const std::string& col, int line_no) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw SchemaError("line " + std::to_string(line_no) + ": column '" + col +
                          "' is not a number: '" + s + "'");
    }
}

}  // namespace

void write_cells_csv(const std::string& path, const CellTable& table, bool with_true_id) {
    std::ostringstream out;
    out << "cell_id,x,y,z,area,type,section";
    if (with_true_id) out << ",true_volume_id";
    out << '\n';
    for (const auto& sec : table.sections)
        for (const auto& c : sec.cells) {
            out << c.id << ',' << format_double(c.x) << ',' << format_double(c.y) << ','
                << format_double(c.z) << ',' << format_double(c.area) << ','
                << table.types.name(c.type) << ',' << c.section;
            if (with_true_id) out << ',' << c.true_id;
            out << '\n';
        }
    atomic_write_text(path, out.str());
}

CellTable read_cells_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path + ": empty file");

    const auto header = split_csv_line(line);
    const std::vector<std::string> required = {"cell_id", "x", "y", "z", "area", "type", "section"};
    std::vector<int> col(required.size() + 1, -1);
    for (std::size_t c = 0; c < header.size(); ++c) {
        for (std::size_t r = 0; r < required.size(); ++r)
            if (header[c] == required[r]) col[r] = static_cast<int>(c);
        if (header[c] == "true_volume_id") col[required.size()] = static_cast<int>(c);
    }
    for (std::size_t r = 0; r < required.size(); ++r)
        if (col[r] < 0) throw SchemaError(path + ": missing required column '" + required[r] + "'");

    TypeTable types;
    std::vector<CellRecord> records;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv_line(line);
        if (f.size() < header.size())
            throw SchemaError(path + ": line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields, got " +
                              std::to_string(f.size()));
        CellRecord r;
        r.id = f[col[0]];
        r.x = parse_double(f[col[1]], "x", line_no);
        r.y = parse_double(f[col[2]], "y", line_no);
        r.z = parse_double(f[col[3]], "z", line_no);
        r.area = parse_double(f[col[4]], "area", line_no);
        r.type = types.intern(f[col[5]]);
        r.section = static_cast<int>(parse_double(f[col[6]], "section", line_no));
        if (col[required.size()] >= 0)
            r.true_id = static_cast<long long>(
                parse_double(f[col[required.size()]], "true_volume_id", line_no));
        if (!(r.area > 0.0))
            throw SchemaError(path + ": line " + std::to_string(line_no) + ": area must be > 0");
        records.push_back(std::move(r));
    }
    return CellTable::from_records(std::move(types), std::move(records));
}

// ------------------------------------------------------------- result CSVs

std::string recovery_csv(const std::vector<mple::RecoveryReport>& rows) {
    std::ostringstream out;
    out << "geometry,seed,budget,mae_alpha,rmse_alpha,mae_B,rmse_B\n";
    for (const auto& r : rows)
        out << geom::to_string(r.geometry) << ',' << r.seed << ',' << r.budget << ','
            << format_double(r.mae_alpha) << ',' << format_double(r.rmse_alpha) << ','
            << format_double(r.mae_B) << ',' << format_double(r.rmse_B) << '\n';
    return out.str();
}

std::string coverage_csv(const std::vector<stackeval::CoverageReport>& rows) {
    std::ostringstream out;
    out << "delta_z,offset,sc_frac,lc_frac,captured_frac,missed_frac,loc_mean,loc_std\n";
    for (const auto& r : rows)
        out << format_double(r.delta_z) << ',' << r.offset << ',' << format_double(r.sc_fraction)
            << ',' << format_double(r.lc_fraction) << ',' << format_double(r.captured_frac) << ','
            << format_double(r.missed_frac) << ',' << format_double(r.loc_mean) << ','
            << format_double(r.loc_std) << '\n';
    return out.str();
}

std::string detectability_csv(
    const std::vector<std::tuple<std::string, int, int, double>>& rows) {
    std::ostringstream out;
    out << "type,M,k,fraction\n";
    for (const auto& [type, m, k, frac] : rows)
        out << type << ',' << m << ',' << k << ',' << format_double(frac) << '\n';
    return out.str();
}

std::string enrichment_csv(const TypeTable& types,
                           const std::vector<std::pair<int, stats::EnrichmentResult>>& rows) {
    std::ostringstream out;
    out << "section,target_type,partner_type,z_score,observed_count,null_mean,null_std,radius,"
           "n_permutations,degenerate\n";
    for (const auto& [section, r] : rows)
        out << section << ',' << types.name(r.target_type) << ',' << types.name(r.partner_type)
            << ',' << format_double(r.z_score) << ',' << r.observed_count << ','
            << format_double(r.null_mean) << ',' << format_double(r.null_std) << ','
            << format_double(r.radius) << ',' << r.n_permutations << ','
            << (r.degenerate_null ? 1 : 0) << '\n';
    return out.str();
}

std::string cloud_csv(const TypeTable& types, const std::vector<match::Point3D>& points) {
    std::ostringstream out;
    out << "cell_id,x,y,z,z_lo,z_hi,type,provenance,chain_len\n";
    for (const auto& p : points)
        out << p.cell_id << ',' << format_double(p.x) << ',' << format_double(p.y) << ','
            << format_double(p.z) << ',' << format_double(p.z_lo) << ',' << format_double(p.z_hi)
            << ',' << types.name(p.type)
            << ',' << (p.provenance == match::Point3D::Provenance::SC ? "SC" : "LC") << ','
            << p.chain_len << '\n';
    return out.str();
}

std::vector<match::Point3D> read_cloud_csv(const std::string& path, TypeTable& types) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
    const auto header = split_csv_line(line);
    const std::vector<std::string> expected = {"cell_id", "x",    "y",          "z",        "z_lo",
                                               "z_hi",    "type", "provenance", "chain_len"};
    for (std::size_t r = 0; r < expected.size(); ++r) {
        bool found = false;
        for (const auto& h : header) found |= h == expected[r];
        if (!found) throw SchemaError(path + ": missing required column '" + expected[r] + "'");
    }
    std::vector<int> col(expected.size(), -1);
    for (std::size_t c = 0; c < header.size(); ++c)
        for (std::size_t r = 0; r < expected.size(); ++r)
            if (header[c] == expected[r]) col[r] = static_cast<int>(c);

    std::vector<match::Point3D> out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv_line(line);
        match::Point3D p;
        p.cell_id = f[col[0]];
        p.x = parse_double(f[col[1]], "x", line_no);
        p.y = parse_double(f[col[2]], "y", line_no);
        p.z = parse_double(f[col[3]], "z", line_no);
        p.z_lo = parse_double(f[col[4]], "z_lo", line_no);
        p.z_hi = parse_double(f[col[5]], "z_hi", line_no);
        p.type = types.intern(f[col[6]]);
        p.provenance = f[col[7]] == "SC" ? match::Point3D::Provenance::SC
                                         : match::Point3D::Provenance::LC;
        p.chain_len = static_cast<int>(parse_double(f[col[8]], "chain_len", line_no));
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace cellstack::io

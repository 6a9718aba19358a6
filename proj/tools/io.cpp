#include "io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "reskit/errors.hpp"

namespace reskit::app {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t");
        const auto e = cell.find_last_not_of(" \t");
        cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_cell(const std::string& cell, const fs::path& path, std::size_t line_no, const char* column) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (cell.empty() || used != cell.size() || !std::isfinite(v)) {
        throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": invalid " + column + " value '" + cell + "'");
    }
    return v;
}

struct CsvTable {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

CsvTable read_csv(const fs::path& path, const std::vector<std::string>& header) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    CsvTable table;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (!have_header) {
            if (cells != header) {
                std::string want;
                for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
                throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": expected header '" + want + "'");
            }
            have_header = true;
            continue;
        }
        if (cells.size() != header.size()) {
            throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                               " columns, found " + std::to_string(cells.size()));
        }
        table.rows.push_back(std::move(cells));
        table.line_numbers.push_back(line_no);
    }
    if (!have_header) throw InvalidInput(path.string() + ": empty file");
    if (table.rows.empty()) throw InvalidInput(path.string() + ": no data rows");
    return table;
}

void dump_value(const json& j, std::string& out, int indent) {
    const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
    const std::string pad_in(static_cast<std::size_t>(indent + 1) * 2, ' ');
    switch (j.type()) {
    case json::value_t::object: {
        if (j.empty()) {
            out += "{}";
            return;
        }
        out += "{\n";
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first) out += ",\n";
            first = false;
            out += pad_in + json(it.key()).dump() + ": ";
            dump_value(it.value(), out, indent + 1);
        }
        out += "\n" + pad + "}";
        return;
    }
    case json::value_t::array: {
        if (j.empty()) {
            out += "[]";
            return;
        }
        out += "[\n";
        bool first = true;
        for (const auto& v : j) {
            if (!first) out += ",\n";
            first = false;
            out += pad_in;
            dump_value(v, out, indent + 1);
        }
        out += "\n" + pad + "]";
        return;
    }
    case json::value_t::number_float: {
        const double v = j.get<double>();
        out += std::isfinite(v) ? format_double(v) : "null";
        return;
    }
    default:
        out += j.dump();
    }
}

} // namespace

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw InvalidInput("cannot create output directory " + dir.string());
}

void write_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidInput("cannot write " + path.string());
        out << content;
        out.flush();
        if (!out) throw InvalidInput("write failed for " + path.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw InvalidInput("cannot move output into place: " + path.string());
    }
}

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string format_double(double v) {
    if (!std::isfinite(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string dump_canonical(const json& j) {
    std::string out;
    dump_value(j, out, 0);
    out += "\n";
    return out;
}

json parse_json_file(const fs::path& path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
}

sigmodel::SweepDirection parse_direction(const std::string& s) {
    if (s == "up") return sigmodel::SweepDirection::up;
    if (s == "down") return sigmodel::SweepDirection::down;
    throw InvalidInput("sweep direction must be 'up' or 'down', got '" + s + "'");
}

const char* direction_name(sigmodel::SweepDirection d) { return d == sigmodel::SweepDirection::up ? "up" : "down"; }

sigmodel::FrequencySweep read_trace_csv(const fs::path& path) {
    const CsvTable t = read_csv(path, {"freq_hz", "s21_re", "s21_im"});
    sigmodel::FrequencySweep sweep;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::size_t ln = t.line_numbers[r];
        const double f = parse_cell(t.rows[r][0], path, ln, "freq_hz");
        if (!(f > 0.0)) throw InvalidInput(path.string() + ":" + std::to_string(ln) + ": frequency must be positive");
        if (!sweep.freqs_hz.empty() && !(f > sweep.freqs_hz.back())) {
            throw InvalidInput(path.string() + ":" + std::to_string(ln) + ": frequencies must be strictly increasing");
        }
        sweep.freqs_hz.push_back(f);
        sweep.s21.emplace_back(parse_cell(t.rows[r][1], path, ln, "s21_re"), parse_cell(t.rows[r][2], path, ln, "s21_im"));
    }
    return sweep;
}

std::string trace_csv(const sigmodel::FrequencySweep& sweep) {
    std::string out = "freq_hz,s21_re,s21_im\n";
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        out += format_double(sweep.freqs_hz[i]) + "," + format_double(sweep.s21[i].real()) + "," +
               format_double(sweep.s21[i].imag()) + "\n";
    }
    return out;
}

SweepManifest load_manifest(const fs::path& path) {
    SweepManifest m;
    m.raw = read_file(path);
    json j;
    try {
        j = json::parse(m.raw);
    } catch (const json::parse_error& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
    const fs::path base = path.parent_path();
    try {
        if (!j.contains("entries") || !j["entries"].is_array()) throw InvalidInput("manifest: missing entries array");
        std::set<double> powers;
        for (const auto& e : j["entries"]) {
            ManifestEntry entry;
            const fs::path p = e.at("trace_path").get<std::string>();
            entry.trace_path = p.is_absolute() ? p : base / p;
            if (!fs::exists(entry.trace_path)) throw InvalidInput("manifest: trace not found: " + entry.trace_path.string());
            entry.source_power_dbm = e.at("source_power_dbm").get<double>();
            entry.sweep_direction = parse_direction(e.value("sweep_direction", std::string("up")));
            if (!powers.insert(entry.source_power_dbm).second) {
                throw InvalidInput("manifest: duplicate source power " + format_double(entry.source_power_dbm) + " dBm");
            }
            m.entries.push_back(entry);
        }
        if (j.contains("shared")) {
            const auto& s = j["shared"];
            m.shared.attenuation_db = s.value("attenuation_db", m.shared.attenuation_db);
            m.shared.temperature_k = s.value("temperature_k", m.shared.temperature_k);
            m.shared.z0_ohm = s.value("z0_ohm", m.shared.z0_ohm);
            m.shared.zr_ohm = s.value("zr_ohm", m.shared.zr_ohm);
        }
        if (j.contains("resonator_meta")) {
            const auto& r = j["resonator_meta"];
            if (r.contains("end_type")) m.resonator_meta.end_type = r["end_type"].get<std::string>();
            if (r.contains("category")) m.resonator_meta.category = r["category"].get<std::string>();
            if (r.contains("width_um")) m.resonator_meta.width_um = r["width_um"].get<double>();
            if (r.contains("f_design_hz")) m.resonator_meta.f_design_hz = r["f_design_hz"].get<double>();
        }
    } catch (const json::exception& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
    if (m.entries.empty()) throw InvalidInput("manifest: no entries");
    if (m.shared.attenuation_db > 0.0) throw InvalidInput("manifest: attenuation_db must be <= 0");
    if (!(m.shared.temperature_k > 0.0)) throw InvalidInput("manifest: temperature_k must be positive");
    if (m.resonator_meta.category && *m.resonator_meta.category != "LM" && *m.resonator_meta.category != "control") {
        throw InvalidInput("manifest: category must be LM or control");
    }
    if (m.resonator_meta.end_type) kinetic::parse_end_type(*m.resonator_meta.end_type);
    return m;
}

json manifest_json(const SweepManifest& m, const fs::path& base_dir) {
    json j;
    j["entries"] = json::array();
    for (const auto& e : m.entries) {
        j["entries"].push_back({{"trace_path", e.trace_path.lexically_relative(base_dir).generic_string()},
                                {"source_power_dbm", e.source_power_dbm},
                                {"sweep_direction", direction_name(e.sweep_direction)}});
    }
    j["shared"] = {{"attenuation_db", m.shared.attenuation_db},
                   {"temperature_k", m.shared.temperature_k},
                   {"z0_ohm", m.shared.z0_ohm},
                   {"zr_ohm", m.shared.zr_ohm}};
    json meta = json::object();
    if (m.resonator_meta.end_type) meta["end_type"] = *m.resonator_meta.end_type;
    if (m.resonator_meta.category) meta["category"] = *m.resonator_meta.category;
    if (m.resonator_meta.width_um) meta["width_um"] = *m.resonator_meta.width_um;
    if (m.resonator_meta.f_design_hz) meta["f_design_hz"] = *m.resonator_meta.f_design_hz;
    j["resonator_meta"] = meta;
    return j;
}

std::vector<kinetic::WidthFrequencyPoint> read_kinetic_csv(const fs::path& path) {
    const CsvTable t = read_csv(path, {"width_um", "f_meas_hz", "f_design_hz", "end_type"});
    std::vector<kinetic::WidthFrequencyPoint> pts;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::size_t ln = t.line_numbers[r];
        kinetic::WidthFrequencyPoint p;
        p.width_um = parse_cell(t.rows[r][0], path, ln, "width_um");
        p.f_meas_hz = parse_cell(t.rows[r][1], path, ln, "f_meas_hz");
        p.f_design_hz = parse_cell(t.rows[r][2], path, ln, "f_design_hz");
        try {
            p.end_type = kinetic::parse_end_type(t.rows[r][3]);
        } catch (const InvalidInput& e) {
            throw InvalidInput(path.string() + ":" + std::to_string(ln) + ": " + e.what());
        }
        pts.push_back(p);
    }
    return pts;
}

Diffractogram read_diffractogram_csv(const fs::path& path) {
    const CsvTable t = read_csv(path, {"two_theta_deg", "counts"});
    Diffractogram d;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::size_t ln = t.line_numbers[r];
        const double x = parse_cell(t.rows[r][0], path, ln, "two_theta_deg");
        if (!d.two_theta_deg.empty() && !(x > d.two_theta_deg.back())) {
            throw InvalidInput(path.string() + ":" + std::to_string(ln) + ": 2theta must be strictly increasing");
        }
        d.two_theta_deg.push_back(x);
        d.counts.push_back(parse_cell(t.rows[r][1], path, ln, "counts"));
    }
    return d;
}

} // namespace reskit::app

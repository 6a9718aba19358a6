#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reskit/kinetic.hpp"
#include "reskit/powersweep.hpp"
#include "reskit/sigmodel.hpp"

namespace reskit::app {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kToolkitVersion = "0.1.0";
inline constexpr const char* kSchemaVersion = "1";

std::string read_file(const fs::path& path);

// Writes to a temporary sibling and renames it over `path`.
void write_atomic(const fs::path& path, const std::string& content);

// Throws InvalidInput when the directory cannot be created.
void ensure_directory(const fs::path& dir);

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t seed = 1469598103934665603ULL);
std::string hex64(std::uint64_t v);

// Canonical text: sorted keys, two-space indent, floats as %.17g,
// non-finite numbers as null, trailing newline.
std::string dump_canonical(const json& j);

// %.17g, or the empty string for non-finite values (CSV cells).
std::string format_double(double v);

json parse_json_file(const fs::path& path);

sigmodel::SweepDirection parse_direction(const std::string& s);
const char* direction_name(sigmodel::SweepDirection d);

// Trace CSV with header freq_hz,s21_re,s21_im. Errors name the line.
sigmodel::FrequencySweep read_trace_csv(const fs::path& path);
std::string trace_csv(const sigmodel::FrequencySweep& sweep);

struct ManifestEntry {
    fs::path trace_path;
    double source_power_dbm = 0.0;
    sigmodel::SweepDirection sweep_direction = sigmodel::SweepDirection::up;
};

struct ResonatorMeta {
    std::optional<std::string> end_type;
    std::optional<std::string> category;  // LM or control
    std::optional<double> width_um;
    std::optional<double> f_design_hz;
};

struct SweepManifest {
    std::vector<ManifestEntry> entries;
    powersweep::LineContext shared;
    ResonatorMeta resonator_meta;
    std::string raw;  // file content, for provenance
};

// Resolves trace paths against the manifest directory and checks that they
// exist, that powers are distinct and that attenuation_db <= 0.
SweepManifest load_manifest(const fs::path& path);
json manifest_json(const SweepManifest& m, const fs::path& base_dir);

// CSV with header width_um,f_meas_hz,f_design_hz,end_type.
std::vector<kinetic::WidthFrequencyPoint> read_kinetic_csv(const fs::path& path);

struct Diffractogram {
    std::vector<double> two_theta_deg;
    std::vector<double> counts;
};

// CSV with header two_theta_deg,counts.
Diffractogram read_diffractogram_csv(const fs::path& path);

} // namespace reskit::app

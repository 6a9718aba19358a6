#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "io.hpp"

namespace reskit::app {

struct Options {
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    int jobs = 0;
    std::optional<std::size_t> iterations;
    std::optional<double> atten_db;
    std::optional<double> temp_k;
    double eval_power_dbm = 10.0;
    double regime_threshold = 0.05;
    std::optional<fs::path> output;
    std::optional<double> power_dbm;
    std::optional<std::string> direction;
};

// Each command returns its JSON report. When options.output is set the
// report and any CSV curves are also written there.

// Writes trace CSVs and manifest.json into options.output (required).
json cmd_synth(const Options& options);
json cmd_fitone(const fs::path& trace, const Options& options);
json cmd_sweep(const fs::path& manifest, const Options& options);
json cmd_nonlin(const fs::path& manifest, const Options& options);
json cmd_kinetic(const fs::path& points_csv, const Options& options);
// diffractogram may be empty: peaks are then taken at their configured centers.
json cmd_xrd(const std::optional<fs::path>& diffractogram, const Options& options);

} // namespace reskit::app

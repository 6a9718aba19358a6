#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "reskit/errors.hpp"

namespace {

void init_logging() {
    auto logger = spdlog::stderr_color_mt("reskit");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char* env = std::getenv("RESKIT_LOG");
    spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

void add_common(CLI::App* cmd, reskit::app::Options& o) {
    cmd->add_option("--config", o.config, "JSON configuration file");
    cmd->add_option("--output", o.output, "Output directory");
    cmd->add_option("--seed", o.seed, "Random seed");
    cmd->add_option("--jobs", o.jobs, "Worker threads (0 = all cores)");
}

void add_line(CLI::App* cmd, reskit::app::Options& o) {
    cmd->add_option("--atten-db", o.atten_db, "Line attenuation in dB (<= 0)");
    cmd->add_option("--temp-k", o.temp_k, "Bath temperature in K");
}

void add_analysis(CLI::App* cmd, reskit::app::Options& o) {
    cmd->add_option("--eval-power-dbm", o.eval_power_dbm, "Source power of the loss budget")->capture_default_str();
    cmd->add_option("--regime-threshold", o.regime_threshold, "a_n0 splitting the linear and nonlinear regimes")
        ->capture_default_str();
    cmd->add_option("--iterations", o.iterations, "Bootstrap iterations");
}

} // namespace

int main(int argc, char** argv) {
    init_logging();
    namespace app = reskit::app;

    CLI::App cli{"Resonator S21 fitting, loss decomposition and nonlinearity analysis"};
    cli.set_version_flag("--version", app::kToolkitVersion);
    cli.require_subcommand(1);
    app::Options o;
    std::string input;
    std::optional<std::string> xrd_input;

    auto* synth = cli.add_subcommand("synth", "Write synthetic traces and a manifest");
    add_common(synth, o);
    add_line(synth, o);
    synth->add_option("--power-dbm", o.power_dbm, "Source power of a single trace");
    synth->add_option("--direction", o.direction, "Sweep direction (up or down)");

    auto* fitone = cli.add_subcommand("fitone", "Fit one trace and print the result");
    fitone->add_option("trace", input, "Trace CSV (freq_hz,s21_re,s21_im)")->required();
    add_common(fitone, o);
    add_line(fitone, o);
    fitone->add_option("--power-dbm", o.power_dbm, "Source power of the trace");
    fitone->add_option("--direction", o.direction, "Sweep direction (up or down)");

    auto* sweep = cli.add_subcommand("sweep", "Fit a power sweep and build the loss budget");
    sweep->add_option("manifest", input, "Sweep manifest JSON")->required();
    add_common(sweep, o);
    add_line(sweep, o);
    add_analysis(sweep, o);

    auto* nonlin = cli.add_subcommand("nonlin", "Extract E* and a_n0 with bootstrap intervals");
    nonlin->add_option("manifest", input, "Sweep manifest JSON")->required();
    add_common(nonlin, o);
    add_line(nonlin, o);
    add_analysis(nonlin, o);

    auto* kinetic = cli.add_subcommand("kinetic", "Kinetic inductance fraction and 1/alpha_L vs width");
    kinetic->add_option("points", input, "CSV (width_um,f_meas_hz,f_design_hz,end_type)")->required();
    add_common(kinetic, o);

    auto* xrd = cli.add_subcommand("xrd", "Pseudo-Voigt peaks, Bragg spacings and strain");
    xrd->add_option("diffractogram", xrd_input, "CSV (two_theta_deg,counts); omit to use configured centers");
    add_common(xrd, o);

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = cli.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        app::json report;
        if (synth->parsed()) report = app::cmd_synth(o);
        else if (fitone->parsed()) report = app::cmd_fitone(input, o);
        else if (sweep->parsed()) report = app::cmd_sweep(input, o);
        else if (nonlin->parsed()) report = app::cmd_nonlin(input, o);
        else if (kinetic->parsed()) report = app::cmd_kinetic(input, o);
        else if (xrd->parsed()) report = app::cmd_xrd(xrd_input ? std::optional<app::fs::path>(*xrd_input) : std::nullopt, o);
        std::cout << app::dump_canonical(report);
        return 0;
    } catch (const reskit::InvalidInput& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const reskit::NumericalError& e) {
        spdlog::error("{}", e.what());
        return 3;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 3;
    }
}

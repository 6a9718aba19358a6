#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include <spdlog/spdlog.h>

#include "report.hpp"
#include "reskit/errors.hpp"
#include "reskit/kinetic.hpp"
#include "reskit/nonlin.hpp"
#include "reskit/parallel.hpp"
#include "reskit/powersweep.hpp"
#include "reskit/respipe.hpp"
#include "reskit/sigmodel.hpp"
#include "reskit/synth_ladder.hpp"
#include "reskit/xrd.hpp"

namespace reskit::app {

namespace {

using sigmodel::FrequencySweep;
using sigmodel::ResonatorParams;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key) || j[key].is_null()) return fallback;
    try {
        return j[key].get<T>();
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("config key '") + key + "': " + e.what());
    }
}

struct LoadedConfig {
    json doc = json::object();
    std::string raw;
};

LoadedConfig load_config(const Options& options, bool required) {
    LoadedConfig c;
    if (!options.config) {
        if (required) throw InvalidInput("this command needs --config");
        return c;
    }
    c.raw = read_file(*options.config);
    try {
        c.doc = json::parse(c.raw);
    } catch (const json::parse_error& e) {
        throw InvalidInput(options.config->string() + ": " + e.what());
    }
    if (!c.doc.is_object()) throw InvalidInput(options.config->string() + ": top level must be an object");
    return c;
}

std::string flags_text(const Options& o) {
    std::string s;
    auto add = [&s](const char* k, const std::string& v) { s += std::string(k) + "=" + v + ";"; };
    if (o.seed) add("seed", std::to_string(*o.seed));
    if (o.iterations) add("iterations", std::to_string(*o.iterations));
    if (o.atten_db) add("atten_db", format_double(*o.atten_db));
    if (o.temp_k) add("temp_k", format_double(*o.temp_k));
    add("eval_power_dbm", format_double(o.eval_power_dbm));
    add("regime_threshold", format_double(o.regime_threshold));
    if (o.power_dbm) add("power_dbm", format_double(*o.power_dbm));
    if (o.direction) add("direction", *o.direction);
    return s;
}

// Worker count is left out on purpose: results do not depend on it.
json provenance(const char* command, const std::string& inputs, const Options& options, std::optional<std::uint64_t> seed) {
    const std::uint64_t h = fnv1a(flags_text(options), fnv1a(inputs));
    return {{"command", command},
            {"config_hash", hex64(h)},
            {"seed", seed ? json(*seed) : json(nullptr)},
            {"toolkit_version", kToolkitVersion},
            {"schema_version", kSchemaVersion}};
}

respipe::PipelineConfig pipeline_config(const json& doc) {
    respipe::PipelineConfig cfg;
    if (!doc.contains("pipeline")) return cfg;
    const json& p = doc["pipeline"];
    if (p.contains("unwrap_mode")) cfg.unwrap_mode = parse_unwrap_mode(p["unwrap_mode"].get<std::string>());
    if (p.contains("fixed_tau_s")) cfg.fixed_tau = p["fixed_tau_s"].get<double>();
    if (p.contains("delay_exclusion_hz")) {
        const auto& w = p["delay_exclusion_hz"];
        if (!w.is_array() || w.size() != 2) throw InvalidInput("pipeline.delay_exclusion_hz must be [lo, hi]");
        cfg.delay_exclusion = respipe::FrequencyWindow{w[0].get<double>(), w[1].get<double>()};
    }
    cfg.snr_threshold_db = get_or(p, "snr_threshold_db", cfg.snr_threshold_db);
    cfg.an_threshold = get_or(p, "an_threshold", cfg.an_threshold);
    cfg.beta0 = get_or(p, "beta0", cfg.beta0);
    cfg.fit_beta = get_or(p, "fit_beta", cfg.fit_beta);
    return cfg;
}

std::string curve_csv(const respipe::PipelineResult& r, std::span<const double> freqs) {
    const ResonatorParams p = r.fit.params();
    std::string out = "freq_hz,z_re,z_im,model_re,model_im\n";
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        const double e = std::norm(r.z[i] - p.off_resonance());
        const auto m = sigmodel::eval_z_given_energy(p, freqs[i], e);
        out += format_double(freqs[i]) + "," + format_double(r.z[i].real()) + "," + format_double(r.z[i].imag()) + "," +
               format_double(m.real()) + "," + format_double(m.imag()) + "\n";
    }
    return out;
}

void write_report(const Options& options, const char* name, const json& report) {
    if (!options.output) return;
    ensure_directory(*options.output);
    write_atomic(*options.output / name, dump_canonical(report));
}

// ---- synth

ResonatorParams resonator_from(const json& r) {
    ResonatorParams p;
    p.a = get_or(r, "a", p.a);
    p.alpha = get_or(r, "alpha_rad", p.alpha);
    p.tau = get_or(r, "tau_s", p.tau);
    p.phi = get_or(r, "phi_rad", p.phi);
    p.q_l = get_or(r, "q_l", p.q_l);
    p.q_c = get_or(r, "q_c", p.q_c);
    p.f_r0 = get_or(r, "f_r0_hz", p.f_r0);
    p.beta = get_or(r, "beta", p.beta);
    p.validate();
    if (r.contains("a_n0")) {
        if (r.contains("beta")) throw InvalidInput("resonator: give either beta or a_n0, not both");
        const double an = r["a_n0"].get<double>();
        if (!(an >= 0.0)) throw InvalidInput("resonator: a_n0 must be nonnegative");
        p.beta = sigmodel::beta_for_an0(p, an);
    }
    return p;
}

sigmodel::GridSpec grid_from(const json& g) {
    sigmodel::GridSpec grid;
    const double points = get_or(g, "points", static_cast<double>(grid.points));
    if (!(points >= 2.0) || points != std::floor(points)) throw InvalidInput("grid.points must be an integer >= 2");
    grid.points = static_cast<std::size_t>(points);
    grid.span_linewidths = get_or(g, "span_linewidths", grid.span_linewidths);
    grid.span_hz = get_or(g, "span_hz", grid.span_hz);
    grid.center_hz = get_or(g, "center_hz", grid.center_hz);
    return grid;
}

} // namespace

json cmd_synth(const Options& options) {
    const LoadedConfig cfg = load_config(options, true);
    if (!options.output) throw InvalidInput("synth needs --output");
    const json& doc = cfg.doc;
    const std::uint64_t seed = options.seed ? *options.seed : get_or<std::uint64_t>(doc, "seed", 0);

    sigmodel::SynthOptions base;
    base.grid = grid_from(doc.value("grid", json::object()));
    base.noise_sigma = get_or(doc, "noise_sigma", 0.0);
    base.attenuation_db = options.atten_db ? *options.atten_db : get_or(doc, "attenuation_db", base.attenuation_db);
    base.temperature_k = options.temp_k ? *options.temp_k : get_or(doc, "temperature_k", base.temperature_k);
    if (base.attenuation_db > 0.0) throw InvalidInput("attenuation_db must be <= 0");
    const auto direction = parse_direction(options.direction ? *options.direction : get_or<std::string>(doc, "direction", "up"));
    const ResonatorParams params = resonator_from(doc.value("resonator", json::object()));

    struct Planned {
        ResonatorParams params;
        double power_dbm;
    };
    std::vector<Planned> plan;
    json ladder_truth = nullptr;
    if (doc.contains("ladder")) {
        const json& l = doc["ladder"];
        sigmodel::LadderSpec spec;
        spec.base = params;
        spec.q_tls0 = get_or(l, "q_tls0", spec.q_tls0);
        spec.n_c = get_or(l, "n_c", spec.n_c);
        spec.alpha_tls = get_or(l, "alpha_tls", spec.alpha_tls);
        spec.q_other = get_or(l, "q_other", spec.q_other);
        spec.e_star_j = get_or(l, "e_star_j", spec.e_star_j);
        spec.tail_delta = get_or(l, "tail_delta", spec.tail_delta);
        spec.n_tail = get_or(l, "n_tail", spec.n_tail);
        spec.tail_exponent = get_or(l, "tail_exponent", spec.tail_exponent);
        spec.temperature_k = base.temperature_k;
        spec.attenuation_db = base.attenuation_db;
        const auto powers = get_or<std::vector<double>>(l, "source_powers_dbm", {});
        if (powers.empty()) throw InvalidInput("ladder.source_powers_dbm must list at least one power");
        ladder_truth = json::array();
        for (const auto& pt : sigmodel::build_ladder(spec, powers)) {
            plan.push_back({pt.params, pt.source_power_dbm});
            ladder_truth.push_back({{"source_power_dbm", pt.source_power_dbm},
                                    {"n_bar", pt.n_bar},
                                    {"q_i", pt.q_i},
                                    {"q_l", pt.params.q_l},
                                    {"beta", pt.params.beta},
                                    {"a_n0", pt.a_n0}});
        }
    } else {
        plan.push_back({params, options.power_dbm ? *options.power_dbm : get_or(doc, "source_power_dbm", 0.0)});
    }

    ensure_directory(*options.output);
    SweepManifest manifest;
    manifest.shared.attenuation_db = base.attenuation_db;
    manifest.shared.temperature_k = base.temperature_k;
    if (doc.contains("resonator_meta")) {
        const json& m = doc["resonator_meta"];
        if (m.contains("end_type")) manifest.resonator_meta.end_type = m["end_type"].get<std::string>();
        if (m.contains("category")) manifest.resonator_meta.category = m["category"].get<std::string>();
        if (m.contains("width_um")) manifest.resonator_meta.width_um = m["width_um"].get<double>();
        if (m.contains("f_design_hz")) manifest.resonator_meta.f_design_hz = m["f_design_hz"].get<double>();
    }
    json traces = json::array();
    for (std::size_t k = 0; k < plan.size(); ++k) {
        sigmodel::SynthOptions so = base;
        so.seed = plan.size() == 1 ? seed : numcore::mix_seed(seed, k);
        so.direction = direction;
        so.source_power_dbm = plan[k].power_dbm;
        const FrequencySweep sweep = sigmodel::synth_trace(plan[k].params, so);
        char name[32];
        std::snprintf(name, sizeof name, "trace_%03zu.csv", k);
        write_atomic(*options.output / name, trace_csv(sweep));
        manifest.entries.push_back({*options.output / name, plan[k].power_dbm, direction});
        traces.push_back({{"trace_path", name}, {"source_power_dbm", plan[k].power_dbm}, {"points", sweep.size()}});
        spdlog::debug("synth: wrote {}", name);
    }
    write_atomic(*options.output / "manifest.json", dump_canonical(manifest_json(manifest, *options.output)));

    json report = {{"command", "synth"},
                   {"manifest_path", "manifest.json"},
                   {"traces", traces},
                   {"ladder_truth", ladder_truth},
                   {"provenance", provenance("synth", cfg.raw, options, seed)}};
    return report;
}

json cmd_fitone(const fs::path& trace, const Options& options) {
    const LoadedConfig cfg = load_config(options, false);
    FrequencySweep sweep = read_trace_csv(trace);
    sweep.source_power_dbm = options.power_dbm ? *options.power_dbm : 0.0;
    sweep.attenuation_db = options.atten_db ? *options.atten_db : -75.0;
    sweep.temperature_k = options.temp_k ? *options.temp_k : 0.015;
    sweep.sweep_direction = parse_direction(options.direction ? *options.direction : "up");
    if (sweep.attenuation_db > 0.0) throw InvalidInput("--atten-db must be <= 0");

    const auto result = respipe::full_pipeline(sweep, pipeline_config(cfg.doc));
    json report = {
        {"command", "fitone"},
        {"trace", {{"points", sweep.size()},
                   {"source_power_dbm", sweep.source_power_dbm},
                   {"attenuation_db", sweep.attenuation_db},
                   {"p_g_w", sigmodel::line_power_w(sweep.source_power_dbm, sweep.attenuation_db)},
                   {"sweep_direction", direction_name(sweep.sweep_direction)}}},
        {"fit", to_json(result.fit)},
        {"diagnostics", to_json(result.diagnostics)},
        {"provenance", provenance("fitone", read_file(trace) + cfg.raw, options, std::nullopt)},
    };
    if (options.output) {
        write_report(options, "fit.json", report);
        write_atomic(*options.output / "fit_curve.csv", curve_csv(result, sweep.freqs_hz));
    }
    return report;
}

namespace {

struct ManifestFits {
    SweepManifest manifest;
    powersweep::LineContext line;
    std::vector<FrequencySweep> sweeps;
    std::vector<parallel::TraceOutcome> outcomes;
    std::vector<powersweep::TraceFitRecord> records;
    std::vector<std::size_t> record_trace;  // trace index of each record
    std::string inputs;                     // bytes for provenance
};

ManifestFits fit_manifest(const fs::path& path, const Options& options, const respipe::PipelineConfig& config) {
    ManifestFits mf;
    mf.manifest = load_manifest(path);
    mf.line = mf.manifest.shared;
    if (options.atten_db) mf.line.attenuation_db = *options.atten_db;
    if (options.temp_k) mf.line.temperature_k = *options.temp_k;
    if (mf.line.attenuation_db > 0.0) throw InvalidInput("--atten-db must be <= 0");
    if (!(mf.line.temperature_k > 0.0)) throw InvalidInput("--temp-k must be positive");
    mf.inputs = mf.manifest.raw;
    for (const auto& e : mf.manifest.entries) {
        FrequencySweep s = read_trace_csv(e.trace_path);
        s.source_power_dbm = e.source_power_dbm;
        s.attenuation_db = mf.line.attenuation_db;
        s.temperature_k = mf.line.temperature_k;
        s.sweep_direction = e.sweep_direction;
        mf.inputs += read_file(e.trace_path);
        mf.sweeps.push_back(std::move(s));
    }
    spdlog::info("fitting {} traces", mf.sweeps.size());
    mf.outcomes = parallel::fit_sweeps(mf.sweeps, config, options.jobs);
    for (std::size_t k = 0; k < mf.outcomes.size(); ++k) {
        const auto& o = mf.outcomes[k];
        if (!o.result) {
            spdlog::warn("trace {}: {}", mf.manifest.entries[k].trace_path.filename().string(), o.error);
            continue;
        }
        mf.records.push_back(powersweep::make_record(o.result->fit, mf.sweeps[k].source_power_dbm, mf.line, options.regime_threshold));
        mf.record_trace.push_back(k);
    }
    return mf;
}

// Rethrows the first per-trace failure when too few traces were fitted.
void require_records(const ManifestFits& mf, std::size_t needed) {
    if (mf.records.size() >= needed) return;
    for (const auto& o : mf.outcomes) {
        if (!o.result) {
            if (o.exit_code == 3) throw NumericalError(o.error);
            throw InvalidInput(o.error);
        }
    }
}

std::string trace_name(const ManifestFits& mf, std::size_t k, const fs::path& manifest_path) {
    return mf.manifest.entries[k].trace_path.lexically_relative(manifest_path.parent_path()).generic_string();
}

std::string category_label(const ResonatorMeta& m) {
    return (m.end_type ? *m.end_type : std::string("unknown")) + "/" + (m.category ? *m.category : std::string("unknown"));
}

json meta_json(const ResonatorMeta& m) {
    json j = json::object();
    if (m.end_type) j["end_type"] = *m.end_type;
    if (m.category) j["category"] = *m.category;
    if (m.width_um) j["width_um"] = *m.width_um;
    if (m.f_design_hz) j["f_design_hz"] = *m.f_design_hz;
    return j;
}

struct NonlinSection {
    json report;
    std::string csv;
};

NonlinSection nonlin_section(const ManifestFits& mf, const Options& options, std::size_t iterations, std::uint64_t seed,
                             const json& doc) {
    json per_trace = json::array();
    std::vector<double> e_values, widths;
    std::string csv = "source_power_dbm,a_n0,e_star_j,e_star_lo_j,e_star_hi_j\n";
    for (std::size_t r = 0; r < mf.records.size(); ++r) {
        const auto& rec = mf.records[r];
        if (rec.regime != powersweep::Regime::nonlinear) continue;
        const std::size_t k = mf.record_trace[r];
        const auto& res = *mf.outcomes[k].result;
        nonlin::BootstrapOptions bo;
        bo.iterations = iterations;
        bo.seed = numcore::mix_seed(seed, k);
        bo.jobs = options.jobs;
        json entry = {{"source_power_dbm", rec.source_power_dbm}, {"trace_index", k}};
        try {
            const auto x = nonlin::extract(res.fit, rec.p_g_w, mf.sweeps[k].freqs_hz, res.z, bo);
            entry["extraction"] = to_json(x);
            entry["error"] = nullptr;
            if (x.e_star.available && x.e_star_ci95) {
                e_values.push_back(x.e_star.e_star_j);
                widths.push_back(x.e_star_ci95->width());
            }
            csv += format_double(rec.source_power_dbm) + "," + format_double(x.a_n0) + "," + format_double(x.e_star.e_star_j) +
                   "," + (x.e_star_ci95 ? format_double(x.e_star_ci95->lo) : "") + "," +
                   (x.e_star_ci95 ? format_double(x.e_star_ci95->hi) : "") + "\n";
        } catch (const std::exception& e) {
            entry["extraction"] = nullptr;
            entry["error"] = e.what();
        }
        per_trace.push_back(entry);
    }
    json weighted = nullptr;
    if (!e_values.empty()) {
        try {
            weighted = to_json(nonlin::weighted_e_star(e_values, widths));
        } catch (const InvalidInput& e) {
            spdlog::warn("weighted E*: {}", e.what());
        }
    }
    json cond = nullptr;
    if (doc.contains("condensation")) {
        const json& c = doc["condensation"];
        nonlin::CondensationInputs in;
        in.n0_per_um3_ev = get_or(c, "n0_per_um3_ev", 0.0);
        in.t_c_k = get_or(c, "t_c_k", 0.0);
        in.volume_um3 = get_or(c, "volume_um3", 0.0);
        cond = {{"n0_per_um3_ev", in.n0_per_um3_ev},
                {"t_c_k", in.t_c_k},
                {"volume_um3", in.volume_um3},
                {"e_cond_j", nonlin::condensation_energy(in)}};
    }
    return {{{"traces", per_trace},
             {"weighted_e_star", weighted},
             {"bootstrap_iterations", iterations},
             {"seed", seed},
             {"condensation", cond}},
            csv};
}

} // namespace

json cmd_sweep(const fs::path& manifest_path, const Options& options) {
    const LoadedConfig cfg = load_config(options, false);
    const auto config = pipeline_config(cfg.doc);
    ManifestFits mf = fit_manifest(manifest_path, options, config);
    require_records(mf, 2);

    powersweep::AnalysisOptions ao;
    ao.line = mf.line;
    ao.regime_threshold = options.regime_threshold;
    ao.eval_power_dbm = options.eval_power_dbm;
    const auto analysis = powersweep::analyze(mf.records, ao);

    json traces = json::array();
    for (std::size_t k = 0; k < mf.outcomes.size(); ++k) {
        const auto& o = mf.outcomes[k];
        json t = {{"trace_path", trace_name(mf, k, manifest_path)},
                  {"source_power_dbm", mf.sweeps[k].source_power_dbm},
                  {"sweep_direction", direction_name(mf.sweeps[k].sweep_direction)}};
        if (o.result) {
            const double power = mf.sweeps[k].source_power_dbm;
            const auto rec = std::find_if(analysis.records.begin(), analysis.records.end(),
                                          [power](const auto& x) { return x.source_power_dbm == power; });
            t["record"] = to_json(*rec);
            t["diagnostics"] = to_json(o.result->diagnostics);
            t["error"] = nullptr;
            try {
                const auto rot = respipe::phi_rotation_fit(mf.sweeps[k].freqs_hz, o.result->z, mf.sweeps[k].sweep_direction);
                t["phi_rotation"] = {{"f_r_hz", to_json(rot.f_r)}, {"q_i", to_json(rot.q_i)}, {"q_l", to_json(rot.q_l)},
                                     {"q_c", to_json(rot.q_c)}, {"converged", rot.fit.converged}};
            } catch (const std::exception& e) {
                t["phi_rotation"] = nullptr;
                spdlog::warn("phi rotation fit failed for trace {}: {}", k, e.what());
            }
        } else {
            t["record"] = nullptr;
            t["diagnostics"] = nullptr;
            t["phi_rotation"] = nullptr;
            t["error"] = o.error;
        }
        traces.push_back(t);
    }

    const std::string label = category_label(mf.manifest.resonator_meta);
    json budget = nullptr;
    json groups = nullptr;
    std::string budget_csv = "category,eval_power_dbm,n_eval,delta_tls,delta_other,delta_power\n";
    if (analysis.budget) {
        budget = to_json(*analysis.budget);
        const std::vector<std::pair<std::string, powersweep::LossBudget>> b{{label, *analysis.budget}};
        groups = to_json(powersweep::group_stats(b));
        budget_csv += label + "," + format_double(analysis.budget->eval_power_dbm) + "," + format_double(analysis.budget->n_eval) +
                      "," + format_double(analysis.budget->delta_tls) + "," + format_double(analysis.budget->delta_other) + "," +
                      format_double(analysis.budget->delta_power) + "\n";
    }

    const std::uint64_t seed = options.seed.value_or(0);
    const auto nl = nonlin_section(mf, options, options.iterations.value_or(0), seed, cfg.doc);

    json report = {
        {"command", "sweep"},
        {"resonator_meta", meta_json(mf.manifest.resonator_meta)},
        {"category", label},
        {"line", {{"attenuation_db", mf.line.attenuation_db},
                  {"temperature_k", mf.line.temperature_k},
                  {"z0_ohm", mf.line.z0_ohm},
                  {"zr_ohm", mf.line.zr_ohm}}},
        {"regime_threshold", options.regime_threshold},
        {"traces", traces},
        {"analysis", {{"tls", analysis.tls ? to_json(*analysis.tls) : json(nullptr)},
                      {"powerlaw", analysis.powerlaw ? to_json(*analysis.powerlaw) : json(nullptr)},
                      {"powerlaw_available", analysis.powerlaw.has_value()},
                      {"loss_budget", budget},
                      {"quality_ok", analysis.quality_ok},
                      {"warnings", analysis.warnings}}},
        {"group_stats", groups},
        {"nonlin", nl.report},
        {"provenance", provenance("sweep", mf.inputs + cfg.raw, options, seed)},
    };

    if (options.output) {
        write_report(options, "report.json", report);
        write_atomic(*options.output / "loss_budget.csv", budget_csv);
        std::string qi = "source_power_dbm,n_bar,q_i,q_i_lo,q_i_hi,regime,tls_model_q_i,powerlaw_model_q_i\n";
        for (const auto& rec : analysis.records) {
            qi += format_double(rec.source_power_dbm) + "," + format_double(rec.n_bar) + "," + format_double(rec.fit.q_i.value) + "," +
                  format_double(rec.fit.q_i_ci95.lo) + "," + format_double(rec.fit.q_i_ci95.hi) + "," +
                  powersweep::regime_name(rec.regime) + "," + (analysis.tls ? format_double(analysis.tls->q_i_at(rec.n_bar)) : "") +
                  "," + (analysis.powerlaw && rec.n_bar > 1.0 ? format_double(analysis.powerlaw->q_i_at(rec.n_bar)) : "") + "\n";
        }
        write_atomic(*options.output / "qi_vs_n.csv", qi);
        for (std::size_t k = 0; k < mf.outcomes.size(); ++k) {
            if (!mf.outcomes[k].result) continue;
            char name[40];
            std::snprintf(name, sizeof name, "trace_%03zu_curve.csv", k);
            write_atomic(*options.output / name, curve_csv(*mf.outcomes[k].result, mf.sweeps[k].freqs_hz));
        }
        if (!nl.report["traces"].empty()) write_atomic(*options.output / "nonlin.csv", nl.csv);
    }
    return report;
}

json cmd_nonlin(const fs::path& manifest_path, const Options& options) {
    const LoadedConfig cfg = load_config(options, false);
    ManifestFits mf = fit_manifest(manifest_path, options, pipeline_config(cfg.doc));
    require_records(mf, 1);
    const std::uint64_t seed = options.seed.value_or(0);
    const std::size_t iterations = options.iterations.value_or(100000);
    const auto nl = nonlin_section(mf, options, iterations, seed, cfg.doc);
    json report = {
        {"command", "nonlin"},
        {"resonator_meta", meta_json(mf.manifest.resonator_meta)},
        {"regime_threshold", options.regime_threshold},
        {"nonlin", nl.report},
        {"provenance", provenance("nonlin", mf.inputs + cfg.raw, options, seed)},
    };
    if (nl.report["traces"].empty()) spdlog::warn("no trace is in the nonlinear regime; nothing to extract");
    if (options.output) {
        write_report(options, "nonlin.json", report);
        write_atomic(*options.output / "nonlin.csv", nl.csv);
    }
    return report;
}

json cmd_kinetic(const fs::path& points_csv, const Options& options) {
    const auto points = read_kinetic_csv(points_csv);
    json pts = json::array();
    for (const auto& p : points) {
        const double a = kinetic::alpha_fraction(p.f_meas_hz, p.f_design_hz);
        pts.push_back({{"width_um", p.width_um},
                       {"end_type", kinetic::end_type_name(p.end_type)},
                       {"f_meas_hz", p.f_meas_hz},
                       {"f_design_hz", p.f_design_hz},
                       {"alpha_l", a},
                       {"inverse_alpha_l", a > 0.0 ? json(1.0 / a) : json(nullptr)}});
    }
    json fits = json::object();
    for (const auto& [type, fit] : kinetic::fit_inverse_alpha_vs_width(points)) fits[kinetic::end_type_name(type)] = to_json(fit);
    json report = {{"command", "kinetic"},
                   {"points", pts},
                   {"fits", fits},
                   {"provenance", provenance("kinetic", read_file(points_csv), options, std::nullopt)}};
    write_report(options, "kinetic.json", report);
    return report;
}

json cmd_xrd(const std::optional<fs::path>& diffractogram, const Options& options) {
    const LoadedConfig cfg = load_config(options, true);
    const json& doc = cfg.doc;
    std::map<std::string, double> lines{{"kalpha1", 0.154060}, {"kalpha2", 0.154443}};
    if (doc.contains("wavelengths_nm")) {
        for (auto it = doc["wavelengths_nm"].begin(); it != doc["wavelengths_nm"].end(); ++it) lines[it.key()] = it.value().get<double>();
    }
    if (!doc.contains("peaks") || !doc["peaks"].is_array() || doc["peaks"].empty()) throw InvalidInput("xrd config needs a peaks array");
    const std::string bg = get_or<std::string>(doc, "background", "linear");
    if (bg != "linear" && bg != "constant") throw InvalidInput("background must be 'constant' or 'linear'");

    std::vector<xrd::PeakInit> inits;
    for (const auto& p : doc["peaks"]) {
        xrd::PeakInit init;
        init.label = get_or<std::string>(p, "label", "peak" + std::to_string(inits.size()));
        if (!p.contains("center_2theta_deg")) throw InvalidInput("peak '" + init.label + "' needs center_2theta_deg");
        init.center_2theta = p["center_2theta_deg"].get<double>();
        init.fwhm = get_or(p, "fwhm_deg", 0.3);
        init.eta = get_or(p, "eta", 0.5);
        init.window_half_width = get_or(p, "window_half_width_deg", 0.0);
        if (p.contains("amplitude_counts")) init.amplitude = p["amplitude_counts"].get<double>();
        inits.push_back(init);
    }

    std::vector<xrd::FittedPeak> fitted;
    std::string inputs = cfg.raw;
    if (diffractogram) {
        const auto d = read_diffractogram_csv(*diffractogram);
        inputs += read_file(*diffractogram);
        fitted = xrd::fit_peaks(d.two_theta_deg, d.counts, inits,
                                bg == "linear" ? xrd::Background::linear : xrd::Background::constant);
    }

    json peaks = json::array();
    for (std::size_t k = 0; k < inits.size(); ++k) {
        const json& p = doc["peaks"][k];
        const std::string line = get_or<std::string>(p, "line", "kalpha1");
        double lambda = 0.0;
        if (p.contains("wavelength_nm")) {
            lambda = p["wavelength_nm"].get<double>();
        } else {
            const auto it = lines.find(line);
            if (it == lines.end()) throw InvalidInput("peak '" + inits[k].label + "': unknown line '" + line + "'");
            lambda = it->second;
        }
        const int order = get_or(p, "order", 1);
        std::optional<int> l_index;
        if (p.contains("l_index")) l_index = p["l_index"].get<int>();
        std::optional<double> d_bulk;
        if (p.contains("d_bulk_nm")) d_bulk = p["d_bulk_nm"].get<double>();
        const double two_theta = diffractogram ? fitted[k].center_2theta.value : inits[k].center_2theta;
        json entry = {{"label", inits[k].label},
                      {"material", get_or<std::string>(p, "material", "")},
                      {"hkl", get_or<std::string>(p, "hkl", "")},
                      {"line", p.contains("wavelength_nm") ? "custom" : line},
                      {"wavelength_nm", lambda},
                      {"order", order},
                      {"two_theta_deg", two_theta},
                      {"fit", diffractogram ? to_json(fitted[k]) : json(nullptr)},
                      {"lattice", to_json(xrd::lattice_from_peak(two_theta, lambda, order, l_index, d_bulk))}};
        peaks.push_back(entry);
    }
    json report = {{"command", "xrd"},
                   {"background", bg},
                   {"peaks", peaks},
                   {"provenance", provenance("xrd", inputs, options, std::nullopt)}};
    write_report(options, "xrd.json", report);
    return report;
}

} // namespace reskit::app

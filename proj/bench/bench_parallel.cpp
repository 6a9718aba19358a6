// Serial reference vs OpenMP kernels: per-trace pipeline fits and the
// parametric bootstrap.

#include <vector>

#include <benchmark/benchmark.h>

#include "reskit/nonlin.hpp"
#include "reskit/parallel.hpp"
#include "reskit/respipe.hpp"
#include "reskit/sigmodel.hpp"

namespace {

using namespace reskit;

sigmodel::ResonatorParams base_params() {
    sigmodel::ResonatorParams p;
    p.a = 0.8;
    p.alpha = 0.7;
    p.tau = 3e-8;
    p.phi = 0.15;
    p.q_l = 4e4;
    p.q_c = 9e4;
    p.f_r0 = 6e9;
    return p;
}

std::vector<sigmodel::FrequencySweep> make_sweeps(std::size_t count) {
    std::vector<sigmodel::FrequencySweep> sweeps;
    for (std::size_t k = 0; k < count; ++k) {
        sigmodel::ResonatorParams p = base_params();
        p.beta = sigmodel::beta_for_an0(p, 0.05 * static_cast<double>(k));
        sigmodel::SynthOptions o;
        o.grid.points = 1001;
        o.grid.span_linewidths = 40.0;
        o.noise_sigma = 0.01 * p.a;
        o.seed = 100 + k;
        o.source_power_dbm = -60.0 + 5.0 * static_cast<double>(k);
        sweeps.push_back(sigmodel::synth_trace(p, o));
    }
    return sweeps;
}

struct BootstrapFixture {
    respipe::PipelineResult fitted;
    sigmodel::FrequencySweep sweep;
    double p_g_w = 0.0;

    BootstrapFixture() {
        sigmodel::ResonatorParams p = base_params();
        p.beta = sigmodel::beta_for_an0(p, 0.3);
        sigmodel::SynthOptions o;
        o.grid.points = 1001;
        o.grid.span_linewidths = 40.0;
        o.noise_sigma = 0.01 * p.a;
        o.seed = 7;
        o.source_power_dbm = -20.0;
        sweep = sigmodel::synth_trace(p, o);
        fitted = respipe::full_pipeline(sweep);
        p_g_w = sigmodel::line_power_w(o.source_power_dbm, o.attenuation_db);
    }
};

const BootstrapFixture& bootstrap_fixture() {
    static const BootstrapFixture f;
    return f;
}

void BM_fit_sweeps_serial(benchmark::State& state) {
    const auto sweeps = make_sweeps(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(parallel::fit_sweeps_serial(sweeps, {}));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_fit_sweeps_omp(benchmark::State& state) {
    const auto sweeps = make_sweeps(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(parallel::fit_sweeps(sweeps, {}, 0));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_bootstrap_serial(benchmark::State& state) {
    const auto& f = bootstrap_fixture();
    nonlin::BootstrapOptions o;
    o.iterations = static_cast<std::size_t>(state.range(0));
    o.seed = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(nonlin::bootstrap_nonlin_serial(f.fitted.fit, f.p_g_w, f.sweep.freqs_hz, f.fitted.z, o));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_bootstrap_omp(benchmark::State& state) {
    const auto& f = bootstrap_fixture();
    nonlin::BootstrapOptions o;
    o.iterations = static_cast<std::size_t>(state.range(0));
    o.seed = 1;
    o.jobs = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(nonlin::bootstrap_nonlin(f.fitted.fit, f.p_g_w, f.sweep.freqs_hz, f.fitted.z, o));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

} // namespace

BENCHMARK(BM_fit_sweeps_serial)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_fit_sweeps_omp)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_bootstrap_serial)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_bootstrap_omp)->Arg(10000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

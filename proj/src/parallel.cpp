#include "reskit/parallel.hpp"

#include "reskit/errors.hpp"

namespace reskit::parallel {

namespace {

TraceOutcome fit_one(const sigmodel::FrequencySweep& sweep, const respipe::PipelineConfig& config) {
    TraceOutcome out;
    try {
        out.result = respipe::full_pipeline(sweep, config);
    } catch (const InvalidInput& e) {
        out.error = e.what();
        out.exit_code = 2;
    } catch (const std::exception& e) {
        out.error = e.what();
        out.exit_code = 3;
    }
    return out;
}

} // namespace

int resolve_jobs(int jobs) { return jobs > 0 ? jobs : omp_get_max_threads(); }

std::vector<TraceOutcome> fit_sweeps(std::span<const sigmodel::FrequencySweep> sweeps, const respipe::PipelineConfig& config,
                                     int jobs) {
    std::vector<TraceOutcome> out(sweeps.size());
    for_each_index(sweeps.size(), jobs, [&](std::size_t i) { out[i] = fit_one(sweeps[i], config); });
    return out;
}

std::vector<TraceOutcome> fit_sweeps_serial(std::span<const sigmodel::FrequencySweep> sweeps,
                                            const respipe::PipelineConfig& config) {
    std::vector<TraceOutcome> out;
    out.reserve(sweeps.size());
    for (const auto& s : sweeps) out.push_back(fit_one(s, config));
    return out;
}

} // namespace reskit::parallel

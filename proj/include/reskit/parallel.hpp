#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <omp.h>

#include "reskit/respipe.hpp"

namespace reskit::parallel {

// jobs <= 0 means the OpenMP default.
int resolve_jobs(int jobs);

// Calls body(i) for i in [0, n) on up to `jobs` threads. body must not throw.
template <typename Body>
void for_each_index(std::size_t n, int jobs, Body&& body) {
    const int threads = resolve_jobs(jobs);
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (long long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
}

struct TraceOutcome {
    std::optional<respipe::PipelineResult> result;
    std::string error;
    int exit_code = 0;  // 2 invalid input, 3 numerical failure
};

std::vector<TraceOutcome> fit_sweeps(std::span<const sigmodel::FrequencySweep> sweeps, const respipe::PipelineConfig& config,
                                     int jobs);
std::vector<TraceOutcome> fit_sweeps_serial(std::span<const sigmodel::FrequencySweep> sweeps,
                                            const respipe::PipelineConfig& config);

} // namespace reskit::parallel

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reskit/numcore.hpp"
#include "reskit/respipe.hpp"

namespace reskit::nonlin {

using numcore::Interval;
using respipe::FullFitResult;
using sigmodel::cdouble;

// delta x = -beta |z - a e^{i alpha}|^2 per sample.
std::vector<double> freq_shift(const FullFitResult& fit, std::span<const cdouble> z);

// Stored energy (2 Q_l^2/Q_c) / (1 + 4 Q_l^2 x^2) * P_g / w_r at one sample.
double stored_energy_at(double q_l, double q_c, double p_g_w, double f_hz, double f_r_hz);

// E per sample with f_r = f_r0 (1 + delta x) taken from the measured trace.
std::vector<double> stored_energy(const FullFitResult& fit, double p_g_w, std::span<const double> freqs_hz,
                                  std::span<const cdouble> z);

struct ScalingEnergy {
    bool available = false;
    double e_star_j = 0.0;
    std::optional<double> se_j;
    int dof = 0;
};

// E* = -slope of the through-origin regression of E on delta x.
ScalingEnergy extract_scaling_energy(std::span<const double> energy_j, std::span<const double> delta_x);

// a_n0 = (2 Q_l^3 / Q_c) P_g / (w_r0 E*).
double nonlinearity_parameter(double q_l, double q_c, double f_r0_hz, double p_g_w, double e_star_j);
double nonlinearity_parameter(const FullFitResult& fit, double p_g_w, double e_star_j);

struct BootstrapDistribution {
    std::vector<double> samples;
    double p2_5 = 0.0;
    double p97_5 = 0.0;
    double point_estimate = 0.0;
};

struct BootstrapOptions {
    std::size_t iterations = 100000;
    std::uint64_t seed = 0;
    bool full_covariance = false;  // correlated draws through the fit covariance
    int jobs = 0;                  // OpenMP threads, <= 0 for the default
};

struct BootstrapResult {
    BootstrapDistribution e_star_j;
    BootstrapDistribution a_n0;
};

// Parametric bootstrap: every iteration perturbs the fit parameters as
// p0 + SE * t(dof), holding f, z and P_g fixed, and recomputes E* and a_n0.
// Iteration i draws from stream (seed, i), so results do not depend on jobs.
// Throws InvalidInput for dof <= 0 or an unavailable point estimate.
BootstrapResult bootstrap_nonlin(const FullFitResult& fit, double p_g_w, std::span<const double> freqs_hz,
                                 std::span<const cdouble> z, const BootstrapOptions& options);

// Single-threaded reference of the same computation.
BootstrapResult bootstrap_nonlin_serial(const FullFitResult& fit, double p_g_w, std::span<const double> freqs_hz,
                                        std::span<const cdouble> z, const BootstrapOptions& options);

struct NonlinExtraction {
    ScalingEnergy e_star;
    std::optional<Interval> e_star_ci95;
    double a_n0 = 0.0;
    std::optional<Interval> a_n0_ci95;
    double e_star_per_photon = 0.0;  // E* / (hbar w_r0)
    std::vector<double> energy_j;
    std::vector<double> delta_x;
    std::size_t bootstrap_iterations = 0;
    std::uint64_t seed = 0;
};

// Point estimates plus, when options.iterations > 0, bootstrap intervals.
NonlinExtraction extract(const FullFitResult& fit, double p_g_w, std::span<const double> freqs_hz, std::span<const cdouble> z,
                         const BootstrapOptions& options);

struct WeightedEstimate {
    double value = 0.0;
    Interval ci95;
    std::size_t used = 0;
    std::vector<std::string> warnings;
};

// Weighted mean with weights 1/width^2. The interval treats each width as
// 2 * 1.96 sigma and combines by inverse variance. Points with a
// nonpositive or non-finite width are dropped with a warning.
WeightedEstimate weighted_e_star(std::span<const double> e_star_j, std::span<const double> ci_widths_j);

struct CondensationInputs {
    double n0_per_um3_ev = 0.0;
    double t_c_k = 0.0;
    double volume_um3 = 0.0;
};

// N0 Delta^2 V / 2 with Delta = 1.75 k_B T_c, in joules.
double condensation_energy(const CondensationInputs& in);

} // namespace reskit::nonlin

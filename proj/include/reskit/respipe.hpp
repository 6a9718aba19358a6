#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reskit/numcore.hpp"
#include "reskit/sigmodel.hpp"

namespace reskit::respipe {

using numcore::Estimate;
using numcore::Interval;
using sigmodel::cdouble;
using sigmodel::FrequencySweep;
using sigmodel::ResonatorParams;
using sigmodel::SweepDirection;

struct FrequencyWindow {
    double lo_hz = 0.0;
    double hi_hz = 0.0;
};

struct DelayFit {
    double tau = 0.0;        // s
    double intercept = 0.0;  // rad, phase extrapolated to f = 0
    std::size_t points_used = 0;
    FrequencyWindow excluded;
};

// Window of half-width span/4 around the deepest (smoothed) |S21| sample.
FrequencyWindow default_delay_exclusion(const FrequencySweep& sweep);

// Background phase fit of the raw trace outside the excluded window:
//   unwrapped arg S21 = c0 - 2 pi tau f + c1 / (f - f_dip).
// The c1 term absorbs the odd far tail of the resonance so that it does not
// leak into the slope. Throws InvalidInput with fewer than 10 background points.
DelayFit fit_cable_delay(const FrequencySweep& sweep, std::optional<FrequencyWindow> exclude = std::nullopt);

// z = S21 * exp(+i 2 pi f tau).
std::vector<cdouble> remove_delay(std::span<const double> freqs_hz, std::span<const cdouble> s21, double tau);

struct CircleFit {
    double xc = 0.0;
    double yc = 0.0;
    double radius = 0.0;
    double rms_residual = 0.0;

    cdouble center() const { return {xc, yc}; }
};

// Algebraic circle fit (constraint B^2 + C^2 - 4AD = 1). Throws InvalidInput
// for fewer than 4 points and NumericalError for degenerate geometry.
CircleFit circle_fit(std::span<const cdouble> points);

struct Centered {
    std::vector<cdouble> z1;
    std::vector<cdouble> z1_circ;
    std::vector<bool> valid;  // false where z1 == 0 and the angle is undefined
};

Centered center_and_circularize(std::span<const cdouble> z, const CircleFit& circle);

enum class UnwrapMode { standard, smoothed, bifurcation_aware };

struct UnwrapOptions {
    double smoothing_sigma = 3.0;  // samples
    double threshold_up = 1.5 * 3.14159265358979323846;
    double threshold_down = 1.9 * 3.14159265358979323846;
    SweepDirection direction = SweepDirection::up;
};

std::vector<double> unwrap_phase(std::span<const double> angles, UnwrapMode mode, const UnwrapOptions& options = {});

struct PhaseFitInput {
    std::span<const double> freqs_hz;
    std::span<const cdouble> z1_circ;
    std::span<const double> phase;  // unwrapped (possibly smoothed) angle of z1
    double radius = 0.0;
    double p_g_w = 0.0;
};

struct PhaseFitOverrides {
    std::optional<double> q_l;
    std::optional<double> f_r0;
    std::optional<double> beta;
    std::optional<double> theta;
    double beta0 = 1e9;     // W^-1, scale of the beta0 * P_g / R start
    bool fit_beta = true;   // false pins beta at 0
};

struct PhaseFitResult {
    Estimate q_l;
    Estimate f_r0;
    Estimate beta;
    Estimate theta;
    int dof = 0;
    bool converged = false;
    bool f_r0_in_span = true;
    double residual_rms = 0.0;  // rad
};

// Starting values for the phase fit. beta comes from a linearized
// regression of the implied resonance frequency against |z1 - z1_off|^2.
struct PhaseGuess {
    double q_l = 0.0;
    double f_peak = 0.0;
    double theta = 0.0;
    double beta_linear = 0.0;
    double f_r0_linear = 0.0;
};

PhaseGuess phase_initial_guess(const PhaseFitInput& input);

PhaseFitResult phase_fit(const PhaseFitInput& input, const PhaseFitOverrides& overrides = {});

struct PhiCorrection {
    double phi = 0.0;
    double phi_init = 0.0;
    bool converged = false;
};

// One-parameter refinement of phi with everything else in `fixed` frozen;
// fixed.phi is the starting value. Keeps the start on failure.
PhiCorrection phi_correction(std::span<const double> freqs_hz, std::span<const cdouble> z, const ResonatorParams& fixed);

struct DirectFitOptions {
    bool fit_beta = true;
    numcore::FitOptions solver{400, 1e-12};
};

// Parameter order of FullFitResult::covariance.
enum FullParam { kA = 0, kAlpha, kPhi, kQl, kQc, kFr0, kBeta, kFullParamCount };

struct FullFitResult {
    Estimate a;
    Estimate alpha;
    Estimate phi;
    Estimate q_l;
    Estimate q_c;
    Estimate f_r0;
    Estimate beta;
    double tau = 0.0;
    int dof = 0;
    Estimate q_i;
    Interval q_i_ci95;
    double q_c_corrected = 0.0;  // Q_c / cos(phi)
    bool phi_physical = true;    // |phi| < pi/2
    bool converged = false;
    double residual_norm = 0.0;
    Eigen::MatrixXd covariance;  // 7x7 in FullParam order, NaN when unavailable
    bool covariance_available = false;

    ResonatorParams params() const;
};

// 1/Q_i = 1/Q_l - cos(phi)/Q_c.
double internal_q(double q_l, double q_c, double phi);

// Minimizes sum |z_i - z_model(f_i, z_i)|^2 over (a, alpha, phi, Q_l, Q_c, f_r0, beta)
// starting from `init`; tau is carried through unchanged.
FullFitResult direct_fit(std::span<const double> freqs_hz, std::span<const cdouble> z, const ResonatorParams& init,
                         const DirectFitOptions& options = {});

struct PipelineConfig {
    std::optional<FrequencyWindow> delay_exclusion;
    std::optional<double> fixed_tau;          // skip the delay fit
    std::optional<UnwrapMode> unwrap_mode;    // auto-selected when empty
    UnwrapOptions unwrap;                     // direction is taken from the sweep
    double snr_threshold_db = 20.0;
    double an_threshold = 0.05;
    double beta0 = 1e9;
    bool fit_beta = true;
};

struct PipelineDiagnostics {
    DelayFit delay;
    CircleFit circle;
    double snr_db = 0.0;
    double preliminary_an = 0.0;
    UnwrapMode unwrap_mode = UnwrapMode::standard;
    std::size_t flagged_samples = 0;
    PhaseFitResult phase;
    PhiCorrection phi;
    std::vector<std::string> warnings;
};

struct PipelineResult {
    FullFitResult fit;
    PipelineDiagnostics diagnostics;
    std::vector<cdouble> z;  // delay-removed trace
};

// Stages after delay removal. Errors carry the failing stage in the message.
PipelineResult fit_z_trace(std::span<const double> freqs_hz, std::span<const cdouble> z, double p_g_w,
                           SweepDirection direction, const PipelineConfig& config = {});

PipelineResult full_pipeline(const FrequencySweep& sweep, const PipelineConfig& config = {});

struct PhiRotationResult {
    Estimate f_r;
    Estimate q_i;
    Estimate q_l;
    Estimate q_c;
    FullFitResult fit;
};

// Linear-model fit (beta pinned at 0, f_r free) of a delay-removed trace.
PhiRotationResult phi_rotation_fit(std::span<const double> freqs_hz, std::span<const cdouble> z,
                                   SweepDirection direction = SweepDirection::up);

} // namespace reskit::respipe

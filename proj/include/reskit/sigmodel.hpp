#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace reskit::sigmodel {

using cdouble = std::complex<double>;

// Hanger resonator parameters. beta = 0 gives the linear response.
struct ResonatorParams {
    double a = 1.0;       // off-resonance magnitude
    double alpha = 0.0;   // off-resonance phase, rad
    double tau = 0.0;     // cable delay, s
    double phi = 0.0;     // impedance-mismatch phase, rad
    double q_l = 1e5;
    double q_c = 2e5;
    double f_r0 = 5e9;    // Hz
    double beta = 0.0;

    cdouble off_resonance() const { return std::polar(a, alpha); }
    // Squared circle diameter a^2 (Q_l/Q_c)^2: the largest |z - z_off|^2.
    double max_energy_term() const;
    // Nonlinearity parameter at f_r0 implied by beta: beta a^2 Q_l^3 / Q_c^2.
    double a_n0() const;
    // Throws InvalidInput when a, q_l, q_c, f_r0 are not positive or beta < 0.
    void validate() const;
};

// Power at the resonator input line for a source power and a (negative)
// attenuation in dB: 10^((P + att)/10 - 3) W.
double line_power_w(double source_power_dbm, double attenuation_db);

// beta giving the requested a_n0 for otherwise fixed parameters.
double beta_for_an0(const ResonatorParams& p, double a_n0);

enum class SweepDirection { up, down };

// One transmission trace. Frequencies are always stored ascending; the
// direction only records how the instrument swept.
struct FrequencySweep {
    std::vector<double> freqs_hz;
    std::vector<cdouble> s21;
    double source_power_dbm = 0.0;
    double attenuation_db = -75.0;
    double temperature_k = 0.015;
    SweepDirection sweep_direction = SweepDirection::up;

    std::size_t size() const { return freqs_hz.size(); }
    // Throws InvalidInput for length mismatch, non-ascending frequencies,
    // non-positive frequencies, or non-finite samples.
    void validate() const;
};

// z(f) of the linear hanger model.
cdouble eval_linear_z(const ResonatorParams& p, double f);

// The nonlinear model with an externally supplied |z - z_off|^2 term, i.e.
// the right-hand side with the measured z substituted. Used by the fits.
cdouble eval_z_given_energy(const ResonatorParams& p, double f, double energy_term);

// Carries the previous solution along a sweep. Empty means cold start.
struct ContinuationState {
    std::optional<double> shift;  // v = 2 Q_l beta |z - z_off|^2 at the last point
};

// Admissible solutions v in [0, 2 a_n0] of the reduced cubic at frequency f,
// ascending. Always at least one for valid parameters.
std::vector<double> nonlinear_shift_roots(const ResonatorParams& p, double f);

// Self-consistent z(f) of the nonlinear model. Picks the root closest to the
// continuation state, or the smallest one on a cold start, then updates the
// state. Throws NumericalError if no admissible root exists.
cdouble eval_nonlinear_z(const ResonatorParams& p, double f, ContinuationState& state);

// S21 = exp(-i 2 pi f tau) z(f) with the linear model when beta = 0.
cdouble eval_s21(const ResonatorParams& p, double f, ContinuationState& state);
cdouble eval_s21(const ResonatorParams& p, double f);

struct GridSpec {
    double center_hz = 0.0;        // 0 means f_r0
    double span_linewidths = 20.0; // total span in units of f_r0 / Q_l
    double span_hz = 0.0;          // overrides span_linewidths when > 0
    std::size_t points = 1001;

    // Ascending frequency grid. Throws InvalidInput for fewer than 2 points.
    std::vector<double> build(const ResonatorParams& p) const;
};

struct SynthOptions {
    GridSpec grid;
    double noise_sigma = 0.0;  // per-quadrature std of additive complex noise
    std::uint64_t seed = 0;
    SweepDirection direction = SweepDirection::up;
    double source_power_dbm = 0.0;
    double attenuation_db = -75.0;
    double temperature_k = 0.015;
};

// Synthesizes a trace (delay applied, then noise). Deterministic in the seed.
FrequencySweep synth_trace(const ResonatorParams& p, const SynthOptions& options);

// Noise-free z(f) along a grid, evaluated in the given sweep order with
// continuation, returned in ascending order.
std::vector<cdouble> sweep_z(const ResonatorParams& p, std::span<const double> freqs_ascending, SweepDirection direction);

} // namespace reskit::sigmodel

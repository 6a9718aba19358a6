#include "reskit/sigmodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "reskit/constants.hpp"
#include "reskit/errors.hpp"

namespace reskit::sigmodel {

namespace {

double eval_cubic(const std::array<double, 4>& c, double x) { return ((c[3] * x + c[2]) * x + c[1]) * x + c[0]; }
double eval_cubic_derivative(const std::array<double, 4>& c, double x) { return (3.0 * c[3] * x + 2.0 * c[2]) * x + c[1]; }

// Real roots of c3 x^3 + c2 x^2 + c1 x + c0 (c3 != 0), closed form followed
// by Newton polishing.
std::vector<double> real_cubic_roots(const std::array<double, 4>& c) {
    const double b = c[2] / c[3];
    const double cc = c[1] / c[3];
    const double d = c[0] / c[3];
    const double p = cc - b * b / 3.0;
    const double q = 2.0 * b * b * b / 27.0 - b * cc / 3.0 + d;
    const double shift = -b / 3.0;
    const double disc = q * q / 4.0 + p * p * p / 27.0;

    std::vector<double> roots;
    if (disc > 0.0) {
        const double s = std::sqrt(disc);
        const double u = std::cbrt(-q / 2.0 - std::copysign(s, q));
        const double t = (u != 0.0) ? u - p / (3.0 * u) : 0.0;
        roots.push_back(t + shift);
    } else if (p < 0.0) {
        const double m = 2.0 * std::sqrt(-p / 3.0);
        const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
        const double theta = std::acos(arg) / 3.0;
        for (int k = 0; k < 3; ++k) {
            roots.push_back(m * std::cos(theta - constants::two_pi * k / 3.0) + shift);
        }
    } else {
        roots.push_back(std::cbrt(-q) + shift);
    }

    for (double& x : roots) {
        for (int it = 0; it < 4; ++it) {
            const double fp = eval_cubic_derivative(c, x);
            if (fp == 0.0) break;
            const double next = x - eval_cubic(c, x) / fp;
            if (!std::isfinite(next) || std::abs(eval_cubic(c, next)) >= std::abs(eval_cubic(c, x))) break;
            x = next;
        }
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

cdouble hanger_response(const ResonatorParams& p, double f, double f_r) {
    const cdouble j(0.0, 1.0);
    const double x = (f - f_r) / f_r;
    const cdouble dip = (p.q_l / p.q_c) * std::polar(1.0, p.phi) / (1.0 + 2.0 * j * p.q_l * x);
    return p.off_resonance() * (1.0 - dip);
}

} // namespace

double ResonatorParams::max_energy_term() const {
    const double r = a * q_l / q_c;
    return r * r;
}

double ResonatorParams::a_n0() const { return beta * a * a * q_l * q_l * q_l / (q_c * q_c); }

void ResonatorParams::validate() const {
    if (!(a > 0.0)) throw InvalidInput("resonator: a must be positive");
    if (!(q_l > 0.0) || !(q_c > 0.0)) throw InvalidInput("resonator: quality factors must be positive");
    if (!(f_r0 > 0.0)) throw InvalidInput("resonator: f_r0 must be positive");
    if (!(beta >= 0.0)) throw InvalidInput("resonator: beta must be nonnegative");
}

double line_power_w(double source_power_dbm, double attenuation_db) {
    return std::pow(10.0, (source_power_dbm + attenuation_db) / 10.0 - 3.0);
}

double beta_for_an0(const ResonatorParams& p, double a_n0) {
    return a_n0 * p.q_c * p.q_c / (p.a * p.a * p.q_l * p.q_l * p.q_l);
}

void FrequencySweep::validate() const {
    if (freqs_hz.empty()) throw InvalidInput("sweep: no samples");
    if (freqs_hz.size() != s21.size()) throw InvalidInput("sweep: frequency and S21 lengths differ");
    for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
        if (!std::isfinite(freqs_hz[i]) || !(freqs_hz[i] > 0.0)) throw InvalidInput("sweep: frequencies must be positive and finite");
        if (i > 0 && !(freqs_hz[i] > freqs_hz[i - 1])) {
            throw InvalidInput("sweep: frequencies must be strictly increasing (row " + std::to_string(i) + ")");
        }
        if (!std::isfinite(s21[i].real()) || !std::isfinite(s21[i].imag())) throw InvalidInput("sweep: non-finite S21 sample");
    }
}

cdouble eval_linear_z(const ResonatorParams& p, double f) { return hanger_response(p, f, p.f_r0); }

cdouble eval_z_given_energy(const ResonatorParams& p, double f, double energy_term) {
    return hanger_response(p, f, p.f_r0 * (1.0 - p.beta * energy_term));
}

std::vector<double> nonlinear_shift_roots(const ResonatorParams& p, double f) {
    // With v = 2 Q_l beta |z - z_off|^2 and y0 = 2 Q_l (f - f_r0)/f_r0 the
    // implicit model reduces to
    //   v [(1 - eps v)^2 + (y0 + v)^2] = A (1 - eps v)^2,
    // eps = 1/(2 Q_l), A = 2 Q_l beta a^2 (Q_l/Q_c)^2 = 2 a_n0.
    const double amp = 2.0 * p.q_l * p.beta * p.max_energy_term();
    if (amp == 0.0) return {0.0};
    const double eps = 0.5 / p.q_l;
    const double y0 = 2.0 * p.q_l * (f - p.f_r0) / p.f_r0;
    const std::array<double, 4> c{
        -amp,
        1.0 + y0 * y0 + 2.0 * amp * eps,
        2.0 * y0 - 2.0 * eps - amp * eps * eps,
        1.0 + eps * eps,
    };
    const double tol = 1e-12 * std::max(1.0, amp);
    std::vector<double> admissible;
    for (double v : real_cubic_roots(c)) {
        if (v < -tol || v > amp + tol) continue;
        v = std::clamp(v, 0.0, amp);
        if (!admissible.empty() && std::abs(v - admissible.back()) <= tol) continue;
        admissible.push_back(v);
    }
    return admissible;
}

cdouble eval_nonlinear_z(const ResonatorParams& p, double f, ContinuationState& state) {
    if (p.beta == 0.0) {
        state.shift = 0.0;
        return eval_linear_z(p, f);
    }
    const std::vector<double> roots = nonlinear_shift_roots(p, f);
    if (roots.empty()) throw NumericalError("eval_nonlinear_z: no admissible root");
    double v = roots.front();
    if (state.shift) {
        const double prev = *state.shift;
        v = *std::min_element(roots.begin(), roots.end(),
                              [prev](double l, double r) { return std::abs(l - prev) < std::abs(r - prev); });
    }
    state.shift = v;
    return hanger_response(p, f, p.f_r0 * (1.0 - v * 0.5 / p.q_l));
}

cdouble eval_s21(const ResonatorParams& p, double f, ContinuationState& state) {
    return std::polar(1.0, -constants::two_pi * f * p.tau) * eval_nonlinear_z(p, f, state);
}

cdouble eval_s21(const ResonatorParams& p, double f) {
    ContinuationState state;
    return eval_s21(p, f, state);
}

std::vector<double> GridSpec::build(const ResonatorParams& p) const {
    if (points < 2) throw InvalidInput("grid: need at least 2 points");
    const double center = center_hz > 0.0 ? center_hz : p.f_r0;
    const double span = span_hz > 0.0 ? span_hz : span_linewidths * p.f_r0 / p.q_l;
    if (!(span > 0.0)) throw InvalidInput("grid: span must be positive");
    if (!(center - span / 2.0 > 0.0)) throw InvalidInput("grid: frequencies must stay positive");
    std::vector<double> freqs(points);
    const double step = span / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) freqs[i] = center - span / 2.0 + step * static_cast<double>(i);
    return freqs;
}

std::vector<cdouble> sweep_z(const ResonatorParams& p, std::span<const double> freqs_ascending, SweepDirection direction) {
    std::vector<cdouble> z(freqs_ascending.size());
    ContinuationState state;
    if (direction == SweepDirection::up) {
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = eval_nonlinear_z(p, freqs_ascending[i], state);
    } else {
        for (std::size_t i = z.size(); i-- > 0;) z[i] = eval_nonlinear_z(p, freqs_ascending[i], state);
    }
    return z;
}

FrequencySweep synth_trace(const ResonatorParams& p, const SynthOptions& options) {
    p.validate();
    if (!(options.noise_sigma >= 0.0)) throw InvalidInput("synth_trace: noise sigma must be nonnegative");
    FrequencySweep sweep;
    sweep.freqs_hz = options.grid.build(p);
    sweep.source_power_dbm = options.source_power_dbm;
    sweep.attenuation_db = options.attenuation_db;
    sweep.temperature_k = options.temperature_k;
    sweep.sweep_direction = options.direction;

    const std::vector<cdouble> z = sweep_z(p, sweep.freqs_hz, options.direction);
    sweep.s21.resize(z.size());
    std::mt19937_64 engine(options.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < z.size(); ++i) {
        const cdouble delayed = std::polar(1.0, -constants::two_pi * sweep.freqs_hz[i] * p.tau) * z[i];
        double re = delayed.real();
        double im = delayed.imag();
        if (options.noise_sigma > 0.0) {
            re += options.noise_sigma * noise(engine);
            im += options.noise_sigma * noise(engine);
        }
        sweep.s21[i] = {re, im};
    }
    return sweep;
}

} // namespace reskit::sigmodel

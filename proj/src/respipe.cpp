#include "reskit/respipe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reskit/constants.hpp"
#include "reskit/errors.hpp"

namespace reskit::respipe {

namespace {

using constants::pi;
using constants::two_pi;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double wrap_angle(double x) {
    x = std::remainder(x, two_pi);
    return x <= -pi ? x + two_pi : x;
}

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const InvalidInput& e) {
        throw InvalidInput(std::string("stage ") + stage + ": " + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("stage ") + stage + ": " + e.what());
    }
}

std::vector<double> standard_unwrap(std::span<const double> a, double rise, double fall) {
    std::vector<double> out(a.size());
    if (a.empty()) return out;
    out[0] = a[0];
    double offset = 0.0;
    for (std::size_t i = 1; i < a.size(); ++i) {
        const double d = a[i] - a[i - 1];
        if (d > rise) {
            offset -= two_pi * std::max(1.0, std::round(d / two_pi));
        } else if (d < -fall) {
            offset += two_pi * std::max(1.0, std::round(-d / two_pi));
        }
        out[i] = a[i] + offset;
    }
    return out;
}

std::vector<std::size_t> order_by_frequency(std::span<const double> f) {
    std::vector<std::size_t> idx(f.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t l, std::size_t r) { return f[l] < f[r]; });
    return idx;
}

// Direction of the off-resonance point seen from the circle center,
// averaged over the samples at both ends of the band.
double endpoint_direction(std::span<const double> f, std::span<const double> phase) {
    const auto idx = order_by_frequency(f);
    const std::size_t k = std::max<std::size_t>(1, idx.size() / 50);
    cdouble acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        acc += std::polar(1.0, phase[idx[j]]);
        acc += std::polar(1.0, phase[idx[idx.size() - 1 - j]]);
    }
    return std::arg(acc);
}

Estimate make_estimate(const numcore::FitResult& fit, std::size_t j, double scale, double offset) {
    return {offset + scale * fit.params[j], std::abs(scale) * fit.standard_errors[j]};
}

} // namespace

// ---------------------------------------------------------------- delay

FrequencyWindow default_delay_exclusion(const FrequencySweep& sweep) {
    sweep.validate();
    std::vector<double> mag(sweep.size());
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(sweep.s21[i]);
    const double sigma = std::max(1.0, static_cast<double>(mag.size()) / 200.0);
    const std::vector<double> smooth = numcore::gaussian_smooth(mag, sigma);
    const auto dip = static_cast<std::size_t>(std::min_element(smooth.begin(), smooth.end()) - smooth.begin());
    const double span = sweep.freqs_hz.back() - sweep.freqs_hz.front();
    return {sweep.freqs_hz[dip] - span / 4.0, sweep.freqs_hz[dip] + span / 4.0};
}

DelayFit fit_cable_delay(const FrequencySweep& sweep, std::optional<FrequencyWindow> exclude) {
    sweep.validate();
    const FrequencyWindow window = exclude ? *exclude : default_delay_exclusion(sweep);
    const double f_c = 0.5 * (window.lo_hz + window.hi_hz);

    std::vector<double> f_left, p_left, f_right, p_right;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        const double f = sweep.freqs_hz[i];
        if (f < window.lo_hz) {
            f_left.push_back(f);
            p_left.push_back(std::arg(sweep.s21[i]));
        } else if (f > window.hi_hz) {
            f_right.push_back(f);
            p_right.push_back(std::arg(sweep.s21[i]));
        }
    }
    const std::size_t total = f_left.size() + f_right.size();
    if (total < 10) {
        throw InvalidInput("fit_cable_delay: only " + std::to_string(total) +
                           " background points outside the excluded window (need 10)");
    }
    p_left = standard_unwrap(p_left, pi, pi);
    p_right = standard_unwrap(p_right, pi, pi);

    // Align the 2 pi branch of the right segment using a pooled slope.
    if (f_left.size() >= 2 && f_right.size() >= 2) {
        double sxy = 0.0, sxx = 0.0;
        double mean_fl = 0.0, mean_pl = 0.0, mean_fr = 0.0, mean_pr = 0.0;
        const auto accumulate = [&](const std::vector<double>& fs, const std::vector<double>& ps, double& mf, double& mp) {
            mf = std::accumulate(fs.begin(), fs.end(), 0.0) / static_cast<double>(fs.size());
            mp = std::accumulate(ps.begin(), ps.end(), 0.0) / static_cast<double>(ps.size());
            for (std::size_t i = 0; i < fs.size(); ++i) {
                sxy += (fs[i] - mf) * (ps[i] - mp);
                sxx += (fs[i] - mf) * (fs[i] - mf);
            }
        };
        accumulate(f_left, p_left, mean_fl, mean_pl);
        accumulate(f_right, p_right, mean_fr, mean_pr);
        const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
        const double predicted = mean_pl + slope * (mean_fr - mean_fl);
        const double k = std::round((predicted - mean_pr) / two_pi);
        for (double& p : p_right) p += two_pi * k;
    }

    std::vector<double> fs = f_left;
    fs.insert(fs.end(), f_right.begin(), f_right.end());
    std::vector<double> ps = p_left;
    ps.insert(ps.end(), p_right.begin(), p_right.end());

    const bool with_tail = f_left.size() >= 3 && f_right.size() >= 3;
    const double f_mean = std::accumulate(fs.begin(), fs.end(), 0.0) / static_cast<double>(fs.size());
    const double half_span = std::max(0.5 * (fs.back() - fs.front()), 1e-300);
    const double tail_scale = std::max(0.5 * (window.hi_hz - window.lo_hz), 1e-300);
    const Eigen::Index cols = with_tail ? 3 : 2;
    Eigen::MatrixXd design(static_cast<Eigen::Index>(fs.size()), cols);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(fs.size()));
    for (std::size_t i = 0; i < fs.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        design(r, 0) = 1.0;
        design(r, 1) = (fs[i] - f_mean) / half_span;
        if (with_tail) design(r, 2) = tail_scale / (fs[i] - f_c);
        rhs[r] = ps[i];
    }
    const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(rhs);
    const double slope = coef[1] / half_span;

    DelayFit out;
    out.tau = -slope / two_pi;
    out.intercept = coef[0] - slope * f_mean;
    out.points_used = fs.size();
    out.excluded = window;
    return out;
}

std::vector<cdouble> remove_delay(std::span<const double> freqs_hz, std::span<const cdouble> s21, double tau) {
    if (freqs_hz.size() != s21.size()) throw InvalidInput("remove_delay: length mismatch");
    std::vector<cdouble> z(s21.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = s21[i] * std::polar(1.0, two_pi * freqs_hz[i] * tau);
    return z;
}

// ---------------------------------------------------------------- circle

CircleFit circle_fit(std::span<const cdouble> points) {
    const std::size_t n = points.size();
    if (n < 4) throw InvalidInput("circle_fit: need at least 4 points");
    cdouble mean = 0.0;
    for (const cdouble& p : points) {
        if (!std::isfinite(p.real()) || !std::isfinite(p.imag())) throw InvalidInput("circle_fit: non-finite point");
        mean += p;
    }
    mean /= static_cast<double>(n);
    double scale = 0.0;
    for (const cdouble& p : points) scale += std::norm(p - mean);
    scale = std::sqrt(scale / static_cast<double>(n));
    if (!(scale > 0.0)) throw NumericalError("circle_fit: all points coincide");

    // Moment matrix of rows (w, x, y, 1) in centered, unit-scale coordinates.
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    for (const cdouble& p : points) {
        const cdouble q = (p - mean) / scale;
        const Eigen::Vector4d row(std::norm(q), q.real(), q.imag(), 1.0);
        m += row * row.transpose();
    }
    Eigen::Matrix4d b = Eigen::Matrix4d::Zero();
    b(0, 3) = b(3, 0) = -2.0;
    b(1, 1) = b(2, 2) = 1.0;
    Eigen::Matrix4d b_inv = Eigen::Matrix4d::Zero();
    b_inv(0, 3) = b_inv(3, 0) = -0.5;
    b_inv(1, 1) = b_inv(2, 2) = 1.0;

    Eigen::EigenSolver<Eigen::Matrix4d> solver(b_inv * m);
    const auto evals = solver.eigenvalues();
    const double tol = 1e-10 * std::max(1.0, evals.cwiseAbs().maxCoeff());
    std::vector<double> candidates;
    for (Eigen::Index k = 0; k < 4; ++k) {
        if (std::abs(evals[k].imag()) <= tol && evals[k].real() >= -tol) candidates.push_back(evals[k].real());
    }
    std::sort(candidates.begin(), candidates.end());

    Eigen::Vector4d coef = Eigen::Vector4d::Zero();
    bool found = false;
    for (double eta : candidates) {
        const Eigen::Matrix4d shifted = m - std::max(eta, 0.0) * b;
        Eigen::JacobiSVD<Eigen::Matrix4d> svd(shifted, Eigen::ComputeFullV);
        const Eigen::Vector4d v = svd.matrixV().col(3);
        const double c = v.dot(b * v);
        if (c > 0.0) {
            coef = v / std::sqrt(c);
            found = true;
            break;
        }
    }
    if (!found || std::abs(coef[0]) < 1e-14) throw NumericalError("circle_fit: degenerate (collinear) geometry");

    CircleFit out;
    out.xc = mean.real() + scale * (-coef[1] / (2.0 * coef[0]));
    out.yc = mean.imag() + scale * (-coef[2] / (2.0 * coef[0]));
    out.radius = scale / (2.0 * std::abs(coef[0]));
    double ss = 0.0;
    for (const cdouble& p : points) {
        const double d = std::abs(p - out.center()) - out.radius;
        ss += d * d;
    }
    out.rms_residual = std::sqrt(ss / static_cast<double>(n));
    return out;
}

Centered center_and_circularize(std::span<const cdouble> z, const CircleFit& circle) {
    Centered out;
    out.z1.resize(z.size());
    out.z1_circ.resize(z.size());
    out.valid.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        out.z1[i] = z[i] - circle.center();
        out.valid[i] = std::abs(out.z1[i]) > 0.0;
        out.z1_circ[i] = out.valid[i] ? std::polar(circle.radius, std::arg(out.z1[i])) : cdouble(0.0, 0.0);
    }
    return out;
}

// ---------------------------------------------------------------- unwrap

std::vector<double> unwrap_phase(std::span<const double> angles, UnwrapMode mode, const UnwrapOptions& options) {
    if (angles.empty()) throw InvalidInput("unwrap_phase: empty sequence");
    switch (mode) {
    case UnwrapMode::standard:
        return standard_unwrap(angles, pi, pi);
    case UnwrapMode::smoothed: {
        std::vector<double> s(angles.size()), c(angles.size());
        for (std::size_t i = 0; i < angles.size(); ++i) {
            s[i] = std::sin(angles[i]);
            c[i] = std::cos(angles[i]);
        }
        s = numcore::gaussian_smooth(s, options.smoothing_sigma);
        c = numcore::gaussian_smooth(c, options.smoothing_sigma);
        std::vector<double> merged(angles.size());
        for (std::size_t i = 0; i < merged.size(); ++i) merged[i] = std::atan2(s[i], c[i]);
        return standard_unwrap(merged, pi, pi);
    }
    case UnwrapMode::bifurcation_aware:
        if (options.direction == SweepDirection::up) {
            return standard_unwrap(angles, options.threshold_up, options.threshold_down);
        } else {
            std::vector<double> rev(angles.rbegin(), angles.rend());
            rev = standard_unwrap(rev, options.threshold_down, options.threshold_up);
            return {rev.rbegin(), rev.rend()};
        }
    }
    return {};
}

// ---------------------------------------------------------------- phase fit

namespace {

void check_phase_input(const PhaseFitInput& in) {
    if (in.freqs_hz.size() != in.z1_circ.size() || in.freqs_hz.size() != in.phase.size()) {
        throw InvalidInput("phase_fit: input lengths differ");
    }
    if (in.freqs_hz.size() < 5) throw InvalidInput("phase_fit: need at least 5 samples");
    if (!(in.radius > 0.0)) throw InvalidInput("phase_fit: radius must be positive");
}

double energy_term(cdouble z1, double radius, double theta) {
    return std::norm(z1 - std::polar(radius, pi - theta));
}

} // namespace

PhaseGuess phase_initial_guess(const PhaseFitInput& in) {
    check_phase_input(in);
    const std::size_t n = in.freqs_hz.size();
    const auto idx = order_by_frequency(in.freqs_hz);
    const double psi_off = endpoint_direction(in.freqs_hz, in.phase);

    PhaseGuess g;
    g.theta = pi - psi_off;

    // |z1 - z1_off|^2 from the (possibly smoothed) phase, in frequency order.
    std::vector<double> e(n), f(n);
    for (std::size_t j = 0; j < n; ++j) {
        f[j] = in.freqs_hz[idx[j]];
        e[j] = 2.0 * in.radius * in.radius * (1.0 - std::cos(in.phase[idx[j]] - psi_off));
    }
    const auto peak = static_cast<std::size_t>(std::max_element(e.begin(), e.end()) - e.begin());
    g.f_peak = f[peak];
    const double half = 0.5 * e[peak];
    double f_lo = f.front();
    for (std::size_t j = peak; j-- > 0;) {
        if (e[j] < half) {
            f_lo = f[j] + (f[j + 1] - f[j]) * (half - e[j]) / (e[j + 1] - e[j]);
            break;
        }
    }
    double f_hi = f.back();
    for (std::size_t j = peak + 1; j < n; ++j) {
        if (e[j] < half) {
            f_hi = f[j - 1] + (f[j] - f[j - 1]) * (e[j - 1] - half) / (e[j - 1] - e[j]);
            break;
        }
    }
    double width = f_hi - f_lo;
    if (!(width > 0.0)) width = 10.0 * (f.back() - f.front()) / static_cast<double>(n - 1);
    g.q_l = g.f_peak / width;

    // Linearized estimate: tan((psi + theta)/2) = 2 Q_l (1 - f/f_r) gives an
    // implied f_r per sample; regress it on the energy term.
    g.beta_linear = 0.0;
    g.f_r0_linear = g.f_peak;
    for (double limit : {0.5 * pi, 0.8 * pi}) {
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = wrap_angle(in.phase[i] + g.theta);
            if (std::abs(w) >= limit) continue;
            const double t = std::tan(0.5 * w);
            xs.push_back(energy_term(in.z1_circ[i], in.radius, g.theta));
            ys.push_back(in.freqs_hz[i] / (1.0 - t / (2.0 * g.q_l)));
        }
        if (xs.size() < 5) continue;
        const double xmin = *std::min_element(xs.begin(), xs.end());
        const double xmax = *std::max_element(xs.begin(), xs.end());
        if (!(xmax - xmin > 1e-6 * in.radius * in.radius)) continue;
        const numcore::LinearRegression reg = numcore::linreg(xs, ys);
        if (reg.intercept > 0.0) {
            g.f_r0_linear = reg.intercept;
            g.beta_linear = std::max(0.0, -reg.slope / reg.intercept);
        }
        break;
    }
    return g;
}

PhaseFitResult phase_fit(const PhaseFitInput& in, const PhaseFitOverrides& overrides) {
    const PhaseGuess guess = phase_initial_guess(in);
    const std::size_t n = in.freqs_hz.size();
    const double q_ref = overrides.q_l.value_or(guess.q_l);
    const double f_ref = overrides.f_r0.value_or(guess.f_peak);
    const double theta0 = overrides.theta.value_or(guess.theta);
    const double lw = f_ref / q_ref;
    const double beta_scale = 1.0 / (4.0 * q_ref * in.radius * in.radius);  // beta per unit a_n
    const double r = in.radius;

    std::vector<double> detune(n);
    for (std::size_t i = 0; i < n; ++i) detune[i] = f_ref - in.freqs_hz[i];

    const auto model = [&](std::span<const double> p, std::size_t i) {
        const double q_l = p[0] * q_ref;
        const double f_r0 = f_ref + p[1] * lw;
        const double beta = overrides.fit_beta ? p[2] * beta_scale : 0.0;
        const double theta = overrides.fit_beta ? p[3] : p[2];
        const double e = energy_term(in.z1_circ[i], r, theta);
        const double f_r = f_r0 * (1.0 - beta * e);
        const double num = detune[i] + p[1] * lw - f_r0 * beta * e;  // f_r - f
        return 2.0 * std::atan(2.0 * q_l * num / f_r) - theta;
    };

    struct Start {
        double q, f, beta, theta;
    };
    std::vector<Start> starts;
    if (!overrides.fit_beta) {
        starts.push_back({q_ref, f_ref, 0.0, theta0});
    } else if (overrides.beta) {
        starts.push_back({q_ref, f_ref, *overrides.beta, theta0});
    } else {
        starts.push_back({q_ref, f_ref, in.p_g_w > 0.0 ? overrides.beta0 * in.p_g_w / r : 0.0, theta0});
        starts.push_back({q_ref, f_ref, 0.0, theta0});
        if (guess.beta_linear > 0.0) {
            starts.push_back({q_ref, overrides.f_r0.value_or(guess.f_r0_linear), guess.beta_linear, theta0});
        }
    }

    const std::size_t np = overrides.fit_beta ? 4 : 3;
    std::optional<numcore::FitResult> best;
    std::vector<double> data(in.phase.begin(), in.phase.end());
    std::vector<double> best_data;
    for (const Start& s : starts) {
        std::vector<double> init{s.q / q_ref, (s.f - f_ref) / lw};
        if (overrides.fit_beta) init.push_back(s.beta / beta_scale);
        init.push_back(s.theta);
        if (!std::isfinite(init[1]) || !(init[0] > 0.0)) continue;

        // Bring the data onto the model's 2 pi branch at the start.
        std::vector<double> aligned = data;
        double shift = 0.0;
        for (std::size_t i = 0; i < n; ++i) shift += model(init, i) - aligned[i];
        const double k = std::round(shift / static_cast<double>(n) / two_pi);
        for (double& v : aligned) v += two_pi * k;

        numcore::FitProblem problem;
        problem.param_count = np;
        problem.data_count = n;
        problem.residuals = [&, aligned](std::span<const double> p, std::span<double> out) {
            for (std::size_t i = 0; i < n; ++i) out[i] = aligned[i] - model(p, i);
        };
        std::vector<double> lower(np, -INFINITY);
        lower[0] = 1e-6;
        if (overrides.fit_beta) lower[2] = 0.0;
        problem.lower_bounds = lower;
        numcore::FitResult fit;
        try {
            fit = numcore::lm_fit(problem, init, {300, 1e-12});
        } catch (const InvalidInput&) {
            continue;
        }
        if (!best || fit.residual_norm < best->residual_norm) {
            best = fit;
            best_data = aligned;
        }
    }
    if (!best) throw NumericalError("phase_fit: no start produced a finite fit");

    PhaseFitResult out;
    out.q_l = make_estimate(*best, 0, q_ref, 0.0);
    out.f_r0 = make_estimate(*best, 1, lw, f_ref);
    if (overrides.fit_beta) {
        out.beta = make_estimate(*best, 2, beta_scale, 0.0);
        out.theta = make_estimate(*best, 3, 1.0, 0.0);
    } else {
        out.beta = {0.0, 0.0};
        out.theta = make_estimate(*best, 2, 1.0, 0.0);
    }
    out.dof = best->dof;
    out.converged = best->converged;
    out.residual_rms = best->residual_norm / std::sqrt(static_cast<double>(n));
    const auto [fmin, fmax] = std::minmax_element(in.freqs_hz.begin(), in.freqs_hz.end());
    out.f_r0_in_span = out.f_r0.value >= *fmin && out.f_r0.value <= *fmax;
    return out;
}

// ---------------------------------------------------------------- phi, direct

PhiCorrection phi_correction(std::span<const double> freqs_hz, std::span<const cdouble> z, const ResonatorParams& fixed) {
    if (freqs_hz.size() != z.size() || z.empty()) throw InvalidInput("phi_correction: bad trace");
    fixed.validate();
    const std::size_t n = z.size();
    const cdouble off = fixed.off_resonance();
    std::vector<double> energy(n);
    for (std::size_t i = 0; i < n; ++i) energy[i] = std::norm(z[i] - off);

    numcore::FitProblem problem;
    problem.param_count = 1;
    problem.data_count = 2 * n;
    problem.residuals = [&](std::span<const double> p, std::span<double> out) {
        ResonatorParams q = fixed;
        q.phi = p[0];
        for (std::size_t i = 0; i < n; ++i) {
            const cdouble d = z[i] - sigmodel::eval_z_given_energy(q, freqs_hz[i], energy[i]);
            out[2 * i] = d.real();
            out[2 * i + 1] = d.imag();
        }
    };
    PhiCorrection out;
    out.phi_init = fixed.phi;
    const std::vector<double> init{fixed.phi};
    const numcore::FitResult fit = numcore::lm_fit(problem, init, {200, 1e-12});
    out.converged = fit.converged;
    out.phi = fit.converged ? wrap_angle(fit.params[0]) : fixed.phi;
    return out;
}

double internal_q(double q_l, double q_c, double phi) { return 1.0 / (1.0 / q_l - std::cos(phi) / q_c); }

ResonatorParams FullFitResult::params() const {
    ResonatorParams p;
    p.a = a.value;
    p.alpha = alpha.value;
    p.phi = phi.value;
    p.q_l = q_l.value;
    p.q_c = q_c.value;
    p.f_r0 = f_r0.value;
    p.beta = beta.value;
    p.tau = tau;
    return p;
}

FullFitResult direct_fit(std::span<const double> freqs_hz, std::span<const cdouble> z, const ResonatorParams& init,
                         const DirectFitOptions& options) {
    if (freqs_hz.size() != z.size()) throw InvalidInput("direct_fit: length mismatch");
    init.validate();
    const std::size_t n = z.size();
    const std::size_t np = options.fit_beta ? 7 : 6;
    if (2 * n < np + 1) throw InvalidInput("direct_fit: too few samples");

    const double a_ref = init.a;
    const double q_ref = init.q_l;
    const double qc_ref = init.q_c;
    const double f_ref = init.f_r0;
    const double lw = f_ref / q_ref;
    const double beta_scale = qc_ref * qc_ref / (a_ref * a_ref * q_ref * q_ref * q_ref);  // beta per unit a_n0
    const double scales[7] = {a_ref, 1.0, 1.0, q_ref, qc_ref, lw, beta_scale};
    const double offsets[7] = {0.0, 0.0, 0.0, 0.0, 0.0, f_ref, 0.0};

    std::vector<double> detune(n);
    for (std::size_t i = 0; i < n; ++i) detune[i] = freqs_hz[i] - f_ref;
    const cdouble j(0.0, 1.0);

    numcore::FitProblem problem;
    problem.param_count = np;
    problem.data_count = 2 * n;
    problem.residuals = [&](std::span<const double> p, std::span<double> out) {
        const double a = p[0] * a_ref;
        const cdouble off = std::polar(a, p[1]);
        const cdouble coupling = (p[3] * q_ref) / (p[4] * qc_ref) * std::polar(1.0, p[2]);
        const double q_l = p[3] * q_ref;
        const double f_r0 = f_ref + p[5] * lw;
        const double beta = options.fit_beta ? p[6] * beta_scale : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = std::norm(z[i] - off);
            const double f_r = f_r0 * (1.0 - beta * e);
            const double x = (detune[i] - p[5] * lw + f_r0 * beta * e) / f_r;  // (f - f_r)/f_r
            const cdouble d = z[i] - off * (1.0 - coupling / (1.0 + 2.0 * j * q_l * x));
            out[2 * i] = d.real();
            out[2 * i + 1] = d.imag();
        }
    };
    std::vector<double> lower(np, -INFINITY);
    lower[0] = lower[3] = lower[4] = 1e-9;
    if (options.fit_beta) lower[6] = 0.0;
    problem.lower_bounds = lower;

    std::vector<double> start{1.0, init.alpha, init.phi, 1.0, 1.0, 0.0};
    if (options.fit_beta) start.push_back(init.beta / beta_scale);
    const numcore::FitResult fit = numcore::lm_fit(problem, start, options.solver);

    FullFitResult out;
    Estimate* slots[7] = {&out.a, &out.alpha, &out.phi, &out.q_l, &out.q_c, &out.f_r0, &out.beta};
    for (std::size_t k = 0; k < np; ++k) *slots[k] = make_estimate(fit, k, scales[k], offsets[k]);
    if (!options.fit_beta) out.beta = {0.0, 0.0};
    out.alpha.value = wrap_angle(out.alpha.value);
    out.phi.value = wrap_angle(out.phi.value);
    out.tau = init.tau;
    out.dof = fit.dof;
    out.converged = fit.converged;
    out.residual_norm = fit.residual_norm;

    out.covariance = Eigen::MatrixXd::Constant(kFullParamCount, kFullParamCount, kNaN);
    out.covariance_available = fit.covariance_available;
    if (fit.covariance_available) {
        out.covariance.setZero();
        for (std::size_t r = 0; r < np; ++r) {
            for (std::size_t c = 0; c < np; ++c) {
                out.covariance(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    scales[r] * scales[c] * fit.covariance(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
            }
        }
    }

    const double q_i = internal_q(out.q_l.value, out.q_c.value, out.phi.value);
    double q_i_se = kNaN;
    if (out.covariance_available) {
        Eigen::Vector3d grad;  // d Q_i / d(phi, Q_l, Q_c)
        grad << -q_i * q_i * std::sin(out.phi.value) / out.q_c.value, q_i * q_i / (out.q_l.value * out.q_l.value),
            -q_i * q_i * std::cos(out.phi.value) / (out.q_c.value * out.q_c.value);
        const Eigen::Index ids[3] = {kPhi, kQl, kQc};
        double var = 0.0;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) var += grad[r] * grad[c] * out.covariance(ids[r], ids[c]);
        }
        q_i_se = std::sqrt(std::max(0.0, var));
    }
    out.q_i = {q_i, q_i_se};
    out.q_i_ci95 = numcore::confidence_interval_95(out.q_i, out.dof);
    out.q_c_corrected = out.q_c.value / std::cos(out.phi.value);
    out.phi_physical = std::abs(out.phi.value) < pi / 2.0;
    return out;
}

// ---------------------------------------------------------------- pipeline

PipelineResult fit_z_trace(std::span<const double> freqs_hz, std::span<const cdouble> z, double p_g_w,
                           SweepDirection direction, const PipelineConfig& config) {
    if (freqs_hz.size() != z.size()) throw InvalidInput("fit_z_trace: length mismatch");
    if (z.empty()) throw InvalidInput("fit_z_trace: empty trace");
    PipelineResult result;
    PipelineDiagnostics& diag = result.diagnostics;
    result.z.assign(z.begin(), z.end());

    diag.circle = run_stage("circle_fit", [&] { return circle_fit(z); });
    const CircleFit& circle = diag.circle;
    const Centered centered = center_and_circularize(z, circle);

    std::vector<double> f_ok, psi;
    std::vector<cdouble> z1c;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (!centered.valid[i]) {
            ++diag.flagged_samples;
            continue;
        }
        f_ok.push_back(freqs_hz[i]);
        z1c.push_back(centered.z1_circ[i]);
        psi.push_back(std::arg(centered.z1[i]));
    }
    if (diag.flagged_samples > 0) diag.warnings.push_back("samples at the circle center excluded from the phase fit");
    if (f_ok.size() < 10) throw NumericalError("stage circularize: fewer than 10 usable samples");

    diag.snr_db = circle.rms_residual > 0.0 ? 20.0 * std::log10(circle.radius / circle.rms_residual) : INFINITY;

    // Reference the angles so that the branch cut sits at the off-resonance
    // direction; the resonance itself then stays away from the cut.
    const double psi_off = endpoint_direction(f_ok, psi);
    const double ref = psi_off - pi;
    std::vector<double> rel(psi.size());
    for (std::size_t i = 0; i < psi.size(); ++i) rel[i] = wrap_angle(psi[i] - ref);

    UnwrapOptions unwrap_opts = config.unwrap;
    unwrap_opts.direction = direction;
    const auto to_absolute = [&](std::vector<double> v) {
        for (double& x : v) x += ref;
        return v;
    };

    PhaseFitOverrides overrides;
    overrides.beta0 = config.beta0;
    overrides.fit_beta = config.fit_beta;
    const auto fit_with = [&](UnwrapMode mode) {
        const std::vector<double> phase = to_absolute(unwrap_phase(rel, mode, unwrap_opts));
        return run_stage("phase_fit", [&] { return phase_fit({f_ok, z1c, phase, circle.radius, p_g_w}, overrides); });
    };

    if (config.unwrap_mode) {
        diag.unwrap_mode = *config.unwrap_mode;
        diag.phase = fit_with(diag.unwrap_mode);
    } else if (diag.snr_db < config.snr_threshold_db) {
        diag.unwrap_mode = UnwrapMode::smoothed;
        diag.phase = fit_with(diag.unwrap_mode);
    } else {
        const std::vector<double> probe = to_absolute(unwrap_phase(rel, UnwrapMode::bifurcation_aware, unwrap_opts));
        const PhaseGuess g = phase_initial_guess({f_ok, z1c, probe, circle.radius, p_g_w});
        diag.preliminary_an = 4.0 * g.beta_linear * g.q_l * circle.radius * circle.radius;
        diag.unwrap_mode = UnwrapMode::standard;
        diag.phase = fit_with(UnwrapMode::standard);
        if (config.fit_beta && diag.preliminary_an > config.an_threshold) {
            // Noise near the branch cut can defeat the asymmetric thresholds,
            // so the bifurcation-aware result must beat the standard one.
            const PhaseFitResult aware = fit_with(UnwrapMode::bifurcation_aware);
            if (aware.residual_rms < diag.phase.residual_rms) {
                diag.unwrap_mode = UnwrapMode::bifurcation_aware;
                diag.phase = aware;
            }
        }
    }
    if (!diag.phase.converged) diag.warnings.push_back("phase fit did not converge");

    ResonatorParams start;
    const cdouble off = std::polar(circle.radius, pi - diag.phase.theta.value) + circle.center();
    start.a = std::abs(off);
    start.alpha = std::arg(off);
    start.q_l = diag.phase.q_l.value;
    start.q_c = start.q_l * start.a / (2.0 * circle.radius);
    start.f_r0 = diag.phase.f_r0.value;
    start.beta = config.fit_beta ? diag.phase.beta.value : 0.0;
    start.phi = wrap_angle(pi - diag.phase.theta.value - start.alpha);

    diag.phi = run_stage("phi_correction", [&] { return phi_correction(freqs_hz, z, start); });
    if (!diag.phi.converged) diag.warnings.push_back("phi correction did not converge; geometric phi kept");
    start.phi = diag.phi.phi;

    DirectFitOptions direct;
    direct.fit_beta = config.fit_beta;
    result.fit = run_stage("direct_fit", [&] { return direct_fit(freqs_hz, z, start, direct); });
    if (!result.fit.converged) diag.warnings.push_back("direct fit did not converge");
    if (!result.fit.phi_physical) diag.warnings.push_back("|phi| >= pi/2: diameter correction unphysical");
    if (!(result.fit.q_i.value > 0.0)) diag.warnings.push_back("derived Q_i is not positive");
    return result;
}

PipelineResult full_pipeline(const FrequencySweep& sweep, const PipelineConfig& config) {
    run_stage("input", [&] { sweep.validate(); });
    DelayFit delay;
    if (config.fixed_tau) {
        delay.tau = *config.fixed_tau;
    } else {
        delay = run_stage("delay_fit", [&] { return fit_cable_delay(sweep, config.delay_exclusion); });
    }
    const std::vector<cdouble> z = remove_delay(sweep.freqs_hz, sweep.s21, delay.tau);
    const double p_g = sigmodel::line_power_w(sweep.source_power_dbm, sweep.attenuation_db);
    PipelineResult result = fit_z_trace(sweep.freqs_hz, z, p_g, sweep.sweep_direction, config);
    result.diagnostics.delay = delay;
    result.fit.tau = delay.tau;
    return result;
}

PhiRotationResult phi_rotation_fit(std::span<const double> freqs_hz, std::span<const cdouble> z, SweepDirection direction) {
    PipelineConfig config;
    config.fit_beta = false;
    const PipelineResult r = fit_z_trace(freqs_hz, z, 0.0, direction, config);
    PhiRotationResult out;
    out.fit = r.fit;
    out.f_r = r.fit.f_r0;
    out.q_i = r.fit.q_i;
    out.q_l = r.fit.q_l;
    out.q_c = r.fit.q_c;
    return out;
}

} // namespace reskit::respipe

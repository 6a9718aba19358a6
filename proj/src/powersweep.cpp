#include "reskit/powersweep.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "reskit/constants.hpp"
#include "reskit/errors.hpp"

namespace reskit::powersweep {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double thermal_factor(double f_hz, double temperature_k) {
    return std::tanh(constants::planck * f_hz / (2.0 * constants::boltzmann * temperature_k));
}

void split_records(std::span<const TraceFitRecord> records, std::vector<double>& n, std::vector<double>& q) {
    for (const auto& r : records) {
        n.push_back(r.n_bar);
        q.push_back(r.fit.q_i.value);
    }
}

} // namespace

const char* regime_name(Regime r) { return r == Regime::linear ? "linear" : "nonlinear"; }

double photon_number(double q_l, double q_c, double f_r0_hz, double p_g_w, double z0_ohm, double zr_ohm) {
    if (!(q_l > 0.0) || !(q_c > 0.0) || !(f_r0_hz > 0.0) || !(p_g_w > 0.0) || !(z0_ohm > 0.0) || !(zr_ohm > 0.0)) {
        throw InvalidInput("photon_number: inputs must be positive");
    }
    const double w = constants::two_pi * f_r0_hz;
    return 2.0 / (constants::hbar * w * w) * (z0_ohm / zr_ohm) * (q_l * q_l / q_c) * p_g_w;
}

double photon_number(const respipe::FullFitResult& fit, double f_r0_hz, double z0_ohm, double zr_ohm, double p_g_w) {
    return photon_number(fit.q_l.value, fit.q_c.value, f_r0_hz, p_g_w, z0_ohm, zr_ohm);
}

TraceFitRecord make_record(const respipe::FullFitResult& fit, double source_power_dbm, const LineContext& line,
                           double regime_threshold) {
    TraceFitRecord r;
    r.source_power_dbm = source_power_dbm;
    r.p_g_w = sigmodel::line_power_w(source_power_dbm, line.attenuation_db);
    r.n_bar = photon_number(fit, fit.f_r0.value, line.z0_ohm, line.zr_ohm, r.p_g_w);
    r.a_n0 = fit.params().a_n0();
    r.regime = r.a_n0 < regime_threshold ? Regime::linear : Regime::nonlinear;
    r.fit = fit;
    return r;
}

double tls_quality(double q_tls0, double n_c, double alpha_tls, double n_bar, double f_hz, double temperature_k) {
    return q_tls0 * std::sqrt(1.0 + std::pow(n_bar / n_c, alpha_tls)) / thermal_factor(f_hz, temperature_k);
}

double TLSFit::q_i_at(double n_bar) const {
    const double q_tls = tls_quality(q_tls0.value, n_c.value, alpha_tls.value, n_bar, f_r0_hz, temperature_k);
    return 1.0 / (1.0 / q_tls + 1.0 / q_other.value);
}

TLSFit fit_tls(std::span<const TraceFitRecord> records, double temperature_k, double f_r0_hz) {
    std::vector<double> n, q;
    split_records(records, n, q);
    return fit_tls(n, q, temperature_k, f_r0_hz);
}

TLSFit fit_tls(std::span<const double> n_bar, std::span<const double> q_i, double temperature_k, double f_r0_hz) {
    if (n_bar.size() != q_i.size()) throw InvalidInput("fit_tls: length mismatch");
    if (n_bar.size() < 5) throw InvalidInput("fit_tls: need at least 5 linear-regime records, got " + std::to_string(n_bar.size()));
    if (!(temperature_k > 0.0) || !(f_r0_hz > 0.0)) throw InvalidInput("fit_tls: temperature and frequency must be positive");
    for (std::size_t i = 0; i < n_bar.size(); ++i) {
        if (!(n_bar[i] > 0.0) || !(q_i[i] > 0.0)) throw InvalidInput("fit_tls: photon numbers and Q_i must be positive");
    }
    const std::size_t m = n_bar.size();
    const double thermal = thermal_factor(f_r0_hz, temperature_k);
    const auto [nmin_it, nmax_it] = std::minmax_element(n_bar.begin(), n_bar.end());
    const double n_min = *nmin_it;
    const double n_max = *nmax_it;

    // Parameters: log Q_TLS0, log n_c, alpha, log Q_other.
    numcore::FitProblem problem;
    problem.param_count = 4;
    problem.data_count = m;
    problem.residuals = [&](std::span<const double> p, std::span<double> out) {
        const double q_tls0 = std::exp(p[0]);
        const double n_c = std::exp(p[1]);
        const double q_other = std::exp(p[3]);
        for (std::size_t i = 0; i < m; ++i) {
            const double q_tls = q_tls0 * std::sqrt(1.0 + std::pow(n_bar[i] / n_c, p[2])) / thermal;
            out[i] = q_i[i] * (1.0 / q_tls + 1.0 / q_other) - 1.0;
        }
    };
    problem.lower_bounds = std::vector<double>{-INFINITY, -INFINITY, 1e-6, -INFINITY};
    problem.upper_bounds = std::vector<double>{INFINITY, INFINITY, 2.0, INFINITY};

    const double loss_max = 1.0 / *std::min_element(q_i.begin(), q_i.end());
    const double loss_min = 1.0 / *std::max_element(q_i.begin(), q_i.end());
    const double q_other0 = 1.0 / (0.9 * loss_min);
    const double q_tls00 = 1.0 / std::max(loss_max - 0.9 * loss_min, 0.1 * loss_max) / thermal;

    std::optional<numcore::FitResult> best;
    const double log_lo = std::log(n_min) - 2.0;
    const double log_hi = std::log(n_max);
    for (int a = 0; a < 3; ++a) {
        for (int k = 0; k < 5; ++k) {
            const double log_nc = log_lo + (log_hi - log_lo) * k / 4.0;
            const std::vector<double> init{std::log(q_tls00), log_nc, 0.4 + 0.4 * a, std::log(q_other0)};
            numcore::FitResult fit = numcore::lm_fit(problem, init, {500, 1e-13});
            if (!best || fit.residual_norm < best->residual_norm) best = std::move(fit);
        }
    }

    // Standard errors by the delta method on the exponential maps.
    TLSFit out;
    const auto from_log = [&](std::size_t j) {
        const double v = std::exp(best->params[j]);
        return Estimate{v, v * best->standard_errors[j]};
    };
    out.q_tls0 = from_log(0);
    out.n_c = from_log(1);
    out.alpha_tls = {best->params[2], best->standard_errors[2]};
    out.q_other = from_log(3);
    out.dof = best->dof;
    out.q_tls0_ci95 = numcore::confidence_interval_95(out.q_tls0, out.dof);
    out.n_c_ci95 = numcore::confidence_interval_95(out.n_c, out.dof);
    out.alpha_tls_ci95 = numcore::confidence_interval_95(out.alpha_tls, out.dof);
    out.q_other_ci95 = numcore::confidence_interval_95(out.q_other, out.dof);
    out.temperature_k = temperature_k;
    out.f_r0_hz = f_r0_hz;
    out.converged = best->converged;
    out.n_min = n_min;
    out.n_max = n_max;
    out.low_confidence = m < 5 || n_max / n_min < 100.0;
    return out;
}

bool quality_filter(const TLSFit& tls) {
    const auto excludes_zero = [](const Interval& ci) {
        return std::isfinite(ci.lo) && std::isfinite(ci.hi) && (ci.lo > 0.0 || ci.hi < 0.0);
    };
    return excludes_zero(tls.q_tls0_ci95) && excludes_zero(tls.q_other_ci95);
}

double PowerLawFit::q_i_at(double n_bar) const {
    return std::pow(10.0, k.value * std::pow(std::log10(n_bar), b.value) + c.value);
}

PowerLawFit fit_powerlaw(std::span<const TraceFitRecord> records) {
    std::vector<double> n, q;
    split_records(records, n, q);
    return fit_powerlaw(n, q);
}

PowerLawFit fit_powerlaw(std::span<const double> n_bar, std::span<const double> q_i) {
    if (n_bar.size() != q_i.size()) throw InvalidInput("fit_powerlaw: length mismatch");
    if (n_bar.size() < 4) throw InvalidInput("fit_powerlaw: need at least 4 nonlinear records, got " + std::to_string(n_bar.size()));
    std::vector<double> x(n_bar.size()), y(n_bar.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(q_i[i] > 0.0)) throw InvalidInput("fit_powerlaw: Q_i must be positive");
        if (!(n_bar[i] > 1.0)) throw InvalidInput("fit_powerlaw: <n> must exceed 1 so that log10 <n> > 0");
        x[i] = std::log10(n_bar[i]);
        y[i] = std::log10(q_i[i]);
    }
    const std::size_t m = x.size();
    numcore::FitProblem problem;
    problem.param_count = 3;
    problem.data_count = m;
    problem.residuals = [&](std::span<const double> p, std::span<double> out) {
        for (std::size_t i = 0; i < m; ++i) out[i] = y[i] - (p[0] * std::pow(x[i], p[1]) + p[2]);
    };
    problem.lower_bounds = std::vector<double>{-INFINITY, 1e-3, -INFINITY};

    std::optional<numcore::FitResult> best;
    for (double b0 : {1.0, 0.5, 2.0}) {
        std::vector<double> xb(m);
        for (std::size_t i = 0; i < m; ++i) xb[i] = std::pow(x[i], b0);
        double k0 = 0.0, c0 = y[0];
        const double spread = *std::max_element(xb.begin(), xb.end()) - *std::min_element(xb.begin(), xb.end());
        if (spread > 0.0) {
            const numcore::LinearRegression reg = numcore::linreg(xb, y);
            k0 = reg.slope;
            c0 = reg.intercept;
        }
        numcore::FitResult fit = numcore::lm_fit(problem, std::vector<double>{k0, b0, c0}, {500, 1e-13});
        if (!best || fit.residual_norm < best->residual_norm) best = std::move(fit);
    }
    PowerLawFit out;
    out.k = {best->params[0], best->standard_errors[0]};
    out.b = {best->params[1], best->standard_errors[1]};
    out.c = {best->params[2], best->standard_errors[2]};
    out.dof = best->dof;
    out.converged = best->converged;
    out.n_min = *std::min_element(n_bar.begin(), n_bar.end());
    out.n_max = *std::max_element(n_bar.begin(), n_bar.end());
    return out;
}

double excess_power_loss(double q_i_eval, double q_other, bool* clamped) {
    const double d = 1.0 / q_i_eval - 1.0 / q_other;
    if (clamped) *clamped = d < 0.0;
    return std::max(0.0, d);
}

double photon_number_at_power(std::span<const TraceFitRecord> records, double source_power_dbm, const LineContext& line) {
    if (records.empty()) throw InvalidInput("photon_number_at_power: no records");
    const auto nearest = std::min_element(records.begin(), records.end(), [&](const auto& l, const auto& r) {
        return std::abs(l.source_power_dbm - source_power_dbm) < std::abs(r.source_power_dbm - source_power_dbm);
    });
    return nearest->n_bar * sigmodel::line_power_w(source_power_dbm, line.attenuation_db) / nearest->p_g_w;
}

LossBudget loss_budget(const TLSFit& tls, const std::optional<PowerLawFit>& powerlaw, double n_eval, double eval_power_dbm) {
    LossBudget out;
    out.delta_tls = 1.0 / tls.q_tls0.value;
    out.delta_other = 1.0 / tls.q_other.value;
    out.eval_power_dbm = eval_power_dbm;
    out.n_eval = n_eval;
    if (!powerlaw) {
        out.delta_power = kNaN;
        out.warnings.push_back("power-law fit unavailable; delta_power not evaluated");
        return out;
    }
    out.extrapolated = n_eval < powerlaw->n_min || n_eval > powerlaw->n_max;
    if (out.extrapolated) out.warnings.push_back("evaluation photon number outside the power-law support");
    out.delta_power = excess_power_loss(powerlaw->q_i_at(n_eval), tls.q_other.value, &out.clamped);
    if (out.clamped) out.warnings.push_back("Q_i at the evaluation power exceeds Q_other; delta_power clamped to 0");

    // Crossing of the two curves inside the TLS window hints that Q_other is
    // underestimated.
    if (tls.n_max > tls.n_min && tls.n_min > 1.0) {
        const double l0 = std::log10(tls.n_min);
        const double l1 = std::log10(tls.n_max);
        int last_sign = 0;
        for (int s = 0; s <= 50; ++s) {
            const double n = std::pow(10.0, l0 + (l1 - l0) * s / 50.0);
            const double diff = powerlaw->q_i_at(n) - tls.q_i_at(n);
            const int sign = (diff > 0.0) - (diff < 0.0);
            if (last_sign != 0 && sign != 0 && sign != last_sign) {
                out.warnings.push_back("power-law and TLS curves cross inside the linear window; Q_other may be underestimated");
                break;
            }
            if (sign != 0) last_sign = sign;
        }
    }
    return out;
}

ComponentStats component_stats(std::span<const double> values) {
    ComponentStats s;
    std::vector<double> v;
    for (double x : values) {
        if (std::isfinite(x)) v.push_back(x);
    }
    s.n = v.size();
    if (v.empty()) {
        s.mean = kNaN;
        return s;
    }
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.sem = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
    }
    return s;
}

GroupStats group_stats(std::span<const std::pair<std::string, LossBudget>> budgets, std::span<const std::string> expected_categories) {
    std::map<std::string, std::vector<const LossBudget*>> by_group;
    for (const auto& [label, budget] : budgets) by_group[label].push_back(&budget);
    GroupStats out;
    for (const auto& [label, list] : by_group) {
        std::vector<double> tls, other, power;
        for (const LossBudget* b : list) {
            tls.push_back(b->delta_tls);
            other.push_back(b->delta_other);
            power.push_back(b->delta_power);
        }
        out.groups[label] = {component_stats(tls), component_stats(other), component_stats(power)};
    }
    for (const std::string& label : expected_categories) {
        if (!by_group.count(label)) out.notes.push_back("category " + label + " has no resonators; omitted");
    }
    return out;
}

PowerSweepAnalysis analyze(std::vector<TraceFitRecord> records, const AnalysisOptions& options) {
    if (records.size() < 2) throw InvalidInput("power sweep: need at least 2 powers");
    std::set<double> powers;
    for (const auto& r : records) {
        if (!powers.insert(r.source_power_dbm).second) {
            throw InvalidInput("power sweep: duplicate source power " + std::to_string(r.source_power_dbm) + " dBm");
        }
    }
    std::sort(records.begin(), records.end(), [](const auto& l, const auto& r) { return l.source_power_dbm < r.source_power_dbm; });

    PowerSweepAnalysis out;
    std::vector<TraceFitRecord> linear, nonlinear;
    for (auto& r : records) {
        r.regime = r.a_n0 < options.regime_threshold ? Regime::linear : Regime::nonlinear;
        (r.regime == Regime::linear ? linear : nonlinear).push_back(r);
    }
    out.records = records;

    if (linear.size() >= 5) {
        double f_sum = 0.0;
        for (const auto& r : linear) f_sum += r.fit.f_r0.value;
        out.tls = fit_tls(linear, options.line.temperature_k, f_sum / static_cast<double>(linear.size()));
        out.quality_ok = quality_filter(*out.tls);
        if (out.tls->low_confidence) out.warnings.push_back("TLS fit spans fewer than 2 decades in <n>; low confidence");
        if (!out.quality_ok) out.warnings.push_back("TLS fit fails the 95% CI zero-exclusion filter");
    } else {
        out.warnings.push_back("fewer than 5 linear-regime records; TLS fit unavailable");
    }
    if (nonlinear.size() >= 4) {
        try {
            out.powerlaw = fit_powerlaw(nonlinear);
        } catch (const InvalidInput& e) {
            out.warnings.push_back(std::string("power-law fit unavailable: ") + e.what());
        }
    } else {
        out.warnings.push_back("fewer than 4 nonlinear-regime records; power-law fit unavailable");
    }
    if (out.tls) {
        const double n_eval = photon_number_at_power(records, options.eval_power_dbm, options.line);
        out.budget = loss_budget(*out.tls, out.powerlaw, n_eval, options.eval_power_dbm);
    }
    return out;
}

} // namespace reskit::powersweep

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reskit/numcore.hpp"
#include "reskit/respipe.hpp"

namespace reskit::powersweep {

using numcore::Estimate;
using numcore::Interval;

enum class Regime { linear, nonlinear };

const char* regime_name(Regime r);

struct LineContext {
    double attenuation_db = -75.0;
    double temperature_k = 0.015;
    double z0_ohm = 50.0;
    double zr_ohm = 50.0;
};

// <n> = 2/(hbar w^2) (Z0/Zr) (Q_l^2/Q_c) P_g with w = 2 pi f_r0.
double photon_number(double q_l, double q_c, double f_r0_hz, double p_g_w, double z0_ohm = 50.0, double zr_ohm = 50.0);
double photon_number(const respipe::FullFitResult& fit, double f_r0_hz, double z0_ohm, double zr_ohm, double p_g_w);

struct TraceFitRecord {
    double source_power_dbm = 0.0;
    double p_g_w = 0.0;
    double n_bar = 0.0;
    double a_n0 = 0.0;
    Regime regime = Regime::linear;
    respipe::FullFitResult fit;
};

TraceFitRecord make_record(const respipe::FullFitResult& fit, double source_power_dbm, const LineContext& line,
                           double regime_threshold = 0.05);

// Q_TLS(n) = Q_TLS0 sqrt(1 + (n/n_c)^alpha) / tanh(h f / 2 k T).
double tls_quality(double q_tls0, double n_c, double alpha_tls, double n_bar, double f_hz, double temperature_k);

struct TLSFit {
    Estimate q_tls0;
    Estimate n_c;
    Estimate alpha_tls;
    Estimate q_other;
    Interval q_tls0_ci95;
    Interval n_c_ci95;
    Interval alpha_tls_ci95;
    Interval q_other_ci95;
    double temperature_k = 0.015;
    double f_r0_hz = 0.0;
    int dof = 0;
    bool converged = false;
    bool low_confidence = false;  // fewer than 5 points or < 2 decades in <n>
    double n_min = 0.0;
    double n_max = 0.0;

    double q_i_at(double n_bar) const;
};

// Fits 1/Q_i = 1/Q_TLS(<n>) + 1/Q_other with relative residuals
// Q_i,data / Q_i,model - 1. Throws InvalidInput for fewer than 5 records.
TLSFit fit_tls(std::span<const TraceFitRecord> records, double temperature_k, double f_r0_hz);
TLSFit fit_tls(std::span<const double> n_bar, std::span<const double> q_i, double temperature_k, double f_r0_hz);

// Both 95% intervals (Q_TLS0, Q_other) strictly exclude zero.
bool quality_filter(const TLSFit& tls);

struct PowerLawFit {
    Estimate k;
    Estimate b;
    Estimate c;
    int dof = 0;
    bool converged = false;
    double n_min = 0.0;
    double n_max = 0.0;

    // 10^(k (log10 n)^b + c)
    double q_i_at(double n_bar) const;
};

// log10 Q_i = k (log10 <n>)^b + c. Needs 4 records with <n> > 1 and Q_i > 0.
PowerLawFit fit_powerlaw(std::span<const TraceFitRecord> records);
PowerLawFit fit_powerlaw(std::span<const double> n_bar, std::span<const double> q_i);

struct LossBudget {
    double delta_tls = 0.0;
    double delta_other = 0.0;
    double delta_power = 0.0;  // NaN when no power law is available
    double eval_power_dbm = 10.0;
    double n_eval = 0.0;
    bool extrapolated = false;
    bool clamped = false;
    std::vector<std::string> warnings;
};

// 1/Q_i,eval - 1/Q_other floored at 0.
double excess_power_loss(double q_i_eval, double q_other, bool* clamped = nullptr);

// <n> at a source power, scaled from the record with the nearest power.
double photon_number_at_power(std::span<const TraceFitRecord> records, double source_power_dbm, const LineContext& line);

LossBudget loss_budget(const TLSFit& tls, const std::optional<PowerLawFit>& powerlaw, double n_eval, double eval_power_dbm = 10.0);

struct ComponentStats {
    double mean = 0.0;
    std::optional<double> sem;  // absent for a single sample
    std::size_t n = 0;
};

struct GroupSummary {
    ComponentStats delta_tls;
    ComponentStats delta_other;
    ComponentStats delta_power;
};

struct GroupStats {
    std::map<std::string, GroupSummary> groups;
    std::vector<std::string> notes;
};

ComponentStats component_stats(std::span<const double> values);

// Groups budgets by category label (e.g. "open/LM"). Expected labels with no
// budgets are omitted and noted.
GroupStats group_stats(std::span<const std::pair<std::string, LossBudget>> budgets,
                       std::span<const std::string> expected_categories = {});

struct AnalysisOptions {
    LineContext line;
    double regime_threshold = 0.05;
    double eval_power_dbm = 10.0;
};

struct PowerSweepAnalysis {
    std::vector<TraceFitRecord> records;
    std::optional<TLSFit> tls;
    std::optional<PowerLawFit> powerlaw;
    std::optional<LossBudget> budget;
    bool quality_ok = false;
    std::vector<std::string> warnings;
};

// Regime split, TLS fit on the linear records, power law on the nonlinear
// ones, and the loss budget. Sections that cannot be fitted are left empty
// with a warning. Throws InvalidInput for fewer than 2 records or duplicate powers.
PowerSweepAnalysis analyze(std::vector<TraceFitRecord> records, const AnalysisOptions& options);

} // namespace reskit::powersweep

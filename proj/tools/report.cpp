#include "report.hpp"

#include "reskit/errors.hpp"

namespace reskit::app {

namespace {

template <typename T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

json stats_json(const powersweep::ComponentStats& s) {
    return {{"mean", s.mean}, {"sem", optional_json(s.sem)}, {"n", s.n}};
}

} // namespace

const char* unwrap_mode_name(respipe::UnwrapMode m) {
    switch (m) {
    case respipe::UnwrapMode::standard: return "standard";
    case respipe::UnwrapMode::smoothed: return "smoothed";
    case respipe::UnwrapMode::bifurcation_aware: return "bifurcation_aware";
    }
    return "standard";
}

respipe::UnwrapMode parse_unwrap_mode(const std::string& s) {
    if (s == "standard") return respipe::UnwrapMode::standard;
    if (s == "smoothed") return respipe::UnwrapMode::smoothed;
    if (s == "bifurcation_aware") return respipe::UnwrapMode::bifurcation_aware;
    throw InvalidInput("unknown unwrap mode '" + s + "'");
}

json to_json(const numcore::Estimate& e) { return {{"value", e.value}, {"se", e.se}}; }

json to_json(const numcore::Interval& i) { return {{"lo", i.lo}, {"hi", i.hi}}; }

json to_json(const respipe::FullFitResult& fit) {
    return {
        {"a", to_json(fit.a)},
        {"alpha_rad", to_json(fit.alpha)},
        {"phi_rad", to_json(fit.phi)},
        {"q_l", to_json(fit.q_l)},
        {"q_c", to_json(fit.q_c)},
        {"f_r0_hz", to_json(fit.f_r0)},
        {"beta", to_json(fit.beta)},
        {"tau_s", fit.tau},
        {"dof", fit.dof},
        {"q_i", to_json(fit.q_i)},
        {"q_i_ci95", to_json(fit.q_i_ci95)},
        {"q_c_corrected", fit.q_c_corrected},
        {"phi_physical", fit.phi_physical},
        {"converged", fit.converged},
        {"residual_norm", fit.residual_norm},
        {"covariance_available", fit.covariance_available},
        {"a_n0", fit.params().a_n0()},
    };
}

json to_json(const respipe::PipelineDiagnostics& d) {
    return {
        {"delay", {{"tau_s", d.delay.tau},
                   {"intercept_rad", d.delay.intercept},
                   {"points_used", d.delay.points_used},
                   {"excluded_lo_hz", d.delay.excluded.lo_hz},
                   {"excluded_hi_hz", d.delay.excluded.hi_hz}}},
        {"circle", {{"xc", d.circle.xc}, {"yc", d.circle.yc}, {"radius", d.circle.radius}, {"rms_residual", d.circle.rms_residual}}},
        {"snr_db", d.snr_db},
        {"preliminary_a_n", d.preliminary_an},
        {"unwrap_mode", unwrap_mode_name(d.unwrap_mode)},
        {"flagged_samples", d.flagged_samples},
        {"phase_fit", {{"q_l", to_json(d.phase.q_l)},
                       {"f_r0_hz", to_json(d.phase.f_r0)},
                       {"beta", to_json(d.phase.beta)},
                       {"theta_rad", to_json(d.phase.theta)},
                       {"dof", d.phase.dof},
                       {"converged", d.phase.converged},
                       {"f_r0_in_span", d.phase.f_r0_in_span},
                       {"residual_rms_rad", d.phase.residual_rms}}},
        {"phi_correction", {{"phi_rad", d.phi.phi}, {"phi_init_rad", d.phi.phi_init}, {"converged", d.phi.converged}}},
        {"warnings", d.warnings},
    };
}

json to_json(const powersweep::TraceFitRecord& r) {
    return {
        {"source_power_dbm", r.source_power_dbm},
        {"p_g_w", r.p_g_w},
        {"n_bar", r.n_bar},
        {"a_n0", r.a_n0},
        {"regime", powersweep::regime_name(r.regime)},
        {"fit", to_json(r.fit)},
    };
}

json to_json(const powersweep::TLSFit& t) {
    return {
        {"q_tls0", to_json(t.q_tls0)},
        {"n_c", to_json(t.n_c)},
        {"alpha_tls", to_json(t.alpha_tls)},
        {"q_other", to_json(t.q_other)},
        {"q_tls0_ci95", to_json(t.q_tls0_ci95)},
        {"n_c_ci95", to_json(t.n_c_ci95)},
        {"alpha_tls_ci95", to_json(t.alpha_tls_ci95)},
        {"q_other_ci95", to_json(t.q_other_ci95)},
        {"temperature_k", t.temperature_k},
        {"f_r0_hz", t.f_r0_hz},
        {"dof", t.dof},
        {"converged", t.converged},
        {"low_confidence", t.low_confidence},
        {"n_min", t.n_min},
        {"n_max", t.n_max},
    };
}

json to_json(const powersweep::PowerLawFit& p) {
    return {
        {"k", to_json(p.k)},
        {"b", to_json(p.b)},
        {"c", to_json(p.c)},
        {"dof", p.dof},
        {"converged", p.converged},
        {"n_min", p.n_min},
        {"n_max", p.n_max},
    };
}

json to_json(const powersweep::LossBudget& b) {
    return {
        {"delta_tls", b.delta_tls},
        {"delta_other", b.delta_other},
        {"delta_power", b.delta_power},
        {"eval_power_dbm", b.eval_power_dbm},
        {"n_eval", b.n_eval},
        {"extrapolated", b.extrapolated},
        {"clamped", b.clamped},
        {"warnings", b.warnings},
    };
}

json to_json(const powersweep::GroupStats& g) {
    json groups = json::object();
    for (const auto& [name, s] : g.groups) {
        groups[name] = {{"delta_tls", stats_json(s.delta_tls)},
                        {"delta_other", stats_json(s.delta_other)},
                        {"delta_power", stats_json(s.delta_power)}};
    }
    return {{"groups", groups}, {"notes", g.notes}};
}

json to_json(const nonlin::NonlinExtraction& x) {
    json j = {
        {"e_star_available", x.e_star.available},
        {"e_star_j", x.e_star.available ? json(x.e_star.e_star_j) : json(nullptr)},
        {"e_star_se_j", optional_json(x.e_star.se_j)},
        {"e_star_ci95_j", x.e_star_ci95 ? to_json(*x.e_star_ci95) : json(nullptr)},
        {"a_n0", x.e_star.available ? json(x.a_n0) : json(nullptr)},
        {"a_n0_ci95", x.a_n0_ci95 ? to_json(*x.a_n0_ci95) : json(nullptr)},
        {"e_star_per_photon", x.e_star.available ? json(x.e_star_per_photon) : json(nullptr)},
        {"regression_dof", x.e_star.dof},
        {"bootstrap_iterations", x.bootstrap_iterations},
        {"seed", x.seed},
    };
    return j;
}

json to_json(const nonlin::WeightedEstimate& w) {
    return {{"e_star_j", w.value}, {"ci95_j", to_json(w.ci95)}, {"used", w.used}, {"warnings", w.warnings}};
}

json to_json(const kinetic::InverseAlphaFit& k) {
    return {
        {"slope_per_um", k.slope},
        {"intercept", k.intercept},
        {"r_squared", k.r_squared},
        {"slope_se_per_um", k.slope_se},
        {"intercept_se", k.intercept_se},
        {"intercept_deviation", k.intercept_deviation},
        {"points_used", k.points_used},
        {"points_excluded", k.points_excluded},
        {"warnings", k.warnings},
    };
}

json to_json(const xrd::FittedPeak& p) {
    return {
        {"label", p.label},
        {"amplitude_counts", to_json(p.amplitude)},
        {"center_2theta_deg", to_json(p.center_2theta)},
        {"fwhm_deg", to_json(p.fwhm)},
        {"eta", to_json(p.eta)},
        {"background_c0_counts", p.background_c0},
        {"background_c1_counts_per_deg", p.background_c1},
        {"window_lo_deg", p.window_lo},
        {"window_hi_deg", p.window_hi},
        {"window_samples", p.window_samples},
        {"window_group", p.window_group},
        {"r_squared", p.r_squared},
        {"converged", p.converged},
    };
}

json to_json(const xrd::LatticeResult& l) {
    return {{"d_hkl_nm", l.d_hkl_nm}, {"c_nm", optional_json(l.c_nm)}, {"strain_zz", optional_json(l.strain_zz)}};
}

} // namespace reskit::app

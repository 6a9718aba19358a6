#include "reskit/synth_ladder.hpp"

#include <cmath>

#include "reskit/constants.hpp"
#include "reskit/errors.hpp"

namespace reskit::sigmodel {

namespace {

double tls_thermal_factor(double f_hz, double temperature_k) {
    return std::tanh(constants::planck * f_hz / (2.0 * constants::boltzmann * temperature_k));
}

} // namespace

double ladder_internal_loss(const LadderSpec& spec, double n_bar) {
    const double q_tls = spec.q_tls0 * std::sqrt(1.0 + std::pow(n_bar / spec.n_c, spec.alpha_tls)) /
                         tls_thermal_factor(spec.base.f_r0, spec.temperature_k);
    double loss = 1.0 / q_tls + 1.0 / spec.q_other;
    if (spec.tail_delta > 0.0 && n_bar > spec.n_tail) {
        loss += spec.tail_delta * (std::pow(n_bar / spec.n_tail, spec.tail_exponent) - 1.0);
    }
    return loss;
}

std::vector<LadderPoint> build_ladder(const LadderSpec& spec, std::span<const double> source_powers_dbm) {
    spec.base.validate();
    if (!(spec.q_tls0 > 0.0) || !(spec.q_other > 0.0) || !(spec.n_c > 0.0) || !(spec.e_star_j > 0.0)) {
        throw InvalidInput("ladder: loss-model parameters must be positive");
    }
    const double cos_phi = std::cos(spec.base.phi);
    const double q_c = spec.base.q_c;
    const double omega = constants::two_pi * spec.base.f_r0;
    const double n_per_watt = 2.0 / (constants::hbar * omega * omega) * (spec.z0_ohm / spec.zr_ohm) / q_c;

    std::vector<LadderPoint> out;
    for (double p_dbm : source_powers_dbm) {
        LadderPoint pt;
        pt.source_power_dbm = p_dbm;
        pt.p_g_w = line_power_w(p_dbm, spec.attenuation_db);

        const auto q_l_at = [&](double n) { return 1.0 / (ladder_internal_loss(spec, n) + cos_phi / q_c); };
        // g(log n) = log n - log(n_implied(n)); n_implied is bounded, so bisect.
        const auto g = [&](double log_n) {
            const double n = std::exp(log_n);
            const double q_l = q_l_at(n);
            return log_n - std::log(n_per_watt * q_l * q_l * pt.p_g_w);
        };
        double lo = std::log(1e-12);
        double hi = std::log(1e30);
        if (g(lo) > 0.0 || g(hi) < 0.0) throw NumericalError("ladder: photon-number bracket failed");
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (g(mid) < 0.0 ? lo : hi) = mid;
        }
        pt.n_bar = std::exp(0.5 * (lo + hi));
        pt.q_i = 1.0 / ladder_internal_loss(spec, pt.n_bar);
        pt.params = spec.base;
        pt.params.q_l = q_l_at(pt.n_bar);
        pt.a_n0 = 2.0 * std::pow(pt.params.q_l, 3) / q_c * pt.p_g_w / (omega * spec.e_star_j);
        pt.params.beta = beta_for_an0(pt.params, pt.a_n0);
        out.push_back(pt);
    }
    return out;
}

} // namespace reskit::sigmodel

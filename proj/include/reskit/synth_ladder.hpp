#pragma once

#include <span>
#include <vector>

#include "reskit/sigmodel.hpp"

namespace reskit::sigmodel {

// Power ladder for one resonator whose internal loss follows the TLS model
// plus an optional high-power tail, and whose nonlinearity has a fixed
// scaling energy. Used to generate end-to-end test data.
struct LadderSpec {
    ResonatorParams base;   // q_l and beta are recomputed per power
    double q_tls0 = 1e6;
    double n_c = 10.0;
    double alpha_tls = 0.7;
    double q_other = 5e5;
    double temperature_k = 0.015;
    double e_star_j = 1e-10;
    // Extra loss tail_delta * ((n / n_tail)^tail_exponent - 1) for n > n_tail.
    double tail_delta = 0.0;
    double n_tail = 1e9;
    double tail_exponent = 1.0;
    double attenuation_db = -75.0;
    double z0_ohm = 50.0;
    double zr_ohm = 50.0;
};

struct LadderPoint {
    double source_power_dbm = 0.0;
    double p_g_w = 0.0;
    double n_bar = 0.0;
    double q_i = 0.0;
    ResonatorParams params;  // q_l and beta for this power
    double a_n0 = 0.0;
};

// Solves the photon-number / loss self-consistency at each source power.
std::vector<LadderPoint> build_ladder(const LadderSpec& spec, std::span<const double> source_powers_dbm);

// Internal loss 1/Q_i at photon number n for the ladder's loss model.
double ladder_internal_loss(const LadderSpec& spec, double n_bar);


} // namespace reskit::sigmodel

#pragma once

#include <complex>
#include <vector>

#include "reskit/sigmodel.hpp"

namespace testsupport {

using reskit::sigmodel::cdouble;
using reskit::sigmodel::ResonatorParams;

inline ResonatorParams base_params() {
    ResonatorParams p;
    p.a = 0.8;
    p.alpha = 0.7;
    p.phi = 0.15;
    p.q_l = 4e4;
    p.q_c = 9e4;
    p.f_r0 = 6e9;
    return p;
}

inline std::vector<double> grid(const ResonatorParams& p, double span_linewidths, std::size_t points) {
    reskit::sigmodel::GridSpec g;
    g.span_linewidths = span_linewidths;
    g.points = points;
    return g.build(p);
}

inline double relerr(double got, double want) { return std::abs(got / want - 1.0); }

} // namespace testsupport

#include <random>

#include "reskit/numcore.hpp"

namespace testsupport {

struct LinearCase {
    ResonatorParams params;
    reskit::sigmodel::SynthOptions synth;
    double q_i = 0.0;
};

// Random linear hanger at 40 dB SNR: a in [0.5, 1.5], alpha in [-pi, pi],
// phi in [-0.4, 0.4], Q_c log-uniform in [2e4, 2e6], Q_l = Q_c U[0.2, 0.8]
// kept inside [1e4, 1e6], f_r0 in [4, 8] GHz, tau in [0, 100 ns].
inline LinearCase draw_linear_case(std::uint64_t seed) {
    auto eng = reskit::numcore::seeded_engine(seed, 0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LinearCase c;
    ResonatorParams& p = c.params;
    p.a = 0.5 + u(eng);
    p.alpha = M_PI * (2.0 * u(eng) - 1.0);
    p.phi = 0.4 * (2.0 * u(eng) - 1.0);
    do {
        p.q_c = std::pow(10.0, std::log10(2e4) + u(eng) * 2.0);
        p.q_l = p.q_c * (0.2 + 0.6 * u(eng));
    } while (p.q_l < 1e4 || p.q_l > 1e6);
    p.f_r0 = 4e9 + 4e9 * u(eng);
    p.tau = 100e-9 * u(eng);
    p.beta = 0.0;
    c.synth.grid.span_linewidths = 40.0;
    c.synth.grid.points = 2001;
    c.synth.noise_sigma = 0.01 * p.a;
    c.synth.seed = seed;
    c.q_i = 1.0 / (1.0 / p.q_l - std::cos(p.phi) / p.q_c);
    return c;
}

} // namespace testsupport

#include "reskit/respipe.hpp"

namespace testsupport {

// Fit record carrying the generator parameters, each with SE = se_frac * |value|.
inline reskit::respipe::FullFitResult fit_from_params(const ResonatorParams& p, double se_frac = 0.0, int dof = 100) {
    reskit::respipe::FullFitResult f;
    const auto est = [&](double v) { return reskit::numcore::Estimate{v, se_frac * std::abs(v)}; };
    f.a = est(p.a);
    f.alpha = est(p.alpha);
    f.phi = est(p.phi);
    f.q_l = est(p.q_l);
    f.q_c = est(p.q_c);
    f.f_r0 = est(p.f_r0);
    f.beta = est(p.beta);
    f.tau = p.tau;
    f.dof = dof;
    f.q_i = {reskit::respipe::internal_q(p.q_l, p.q_c, p.phi), 0.0};
    f.converged = true;
    return f;
}

// E* implied by the generator: 2 Q_c P_g / (w_r0 beta a^2).
inline double generator_e_star(const ResonatorParams& p, double p_g_w) {
    return 2.0 * p.q_c * p_g_w / (2.0 * M_PI * p.f_r0 * p.beta * p.a * p.a);
}

} // namespace testsupport

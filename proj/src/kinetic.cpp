#include "reskit/kinetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "reskit/errors.hpp"
#include "reskit/numcore.hpp"

namespace reskit::kinetic {

const char* end_type_name(EndType t) { return t == EndType::open ? "open" : "short"; }

EndType parse_end_type(const std::string& s) {
    if (s == "open") return EndType::open;
    if (s == "short") return EndType::short_ended;
    throw InvalidInput("unknown end type '" + s + "' (expected open or short)");
}

double alpha_fraction(double f_meas_hz, double f_design_hz) {
    if (!(f_meas_hz > 0.0) || !(f_design_hz > 0.0) || !std::isfinite(f_meas_hz) || !std::isfinite(f_design_hz)) {
        throw InvalidInput("alpha_fraction: frequencies must be positive and finite");
    }
    if (f_meas_hz > f_design_hz) throw InvalidInput("alpha_fraction: measured frequency exceeds the design frequency");
    const double r = f_meas_hz / f_design_hz;
    return 1.0 - r * r;
}

std::map<EndType, InverseAlphaFit> fit_inverse_alpha_vs_width(std::span<const WidthFrequencyPoint> points) {
    if (points.empty()) throw InvalidInput("fit_inverse_alpha_vs_width: no points");
    std::map<EndType, std::vector<const WidthFrequencyPoint*>> groups;
    for (const auto& p : points) {
        if (!(p.width_um > 0.0)) throw InvalidInput("fit_inverse_alpha_vs_width: width must be positive");
        groups[p.end_type].push_back(&p);
    }

    std::map<EndType, InverseAlphaFit> out;
    for (const auto& [type, members] : groups) {
        InverseAlphaFit fit;
        std::vector<double> w, inv;
        for (const auto* p : members) {
            const double a = alpha_fraction(p->f_meas_hz, p->f_design_hz);
            if (a == 0.0) {
                ++fit.points_excluded;
                fit.warnings.push_back("excluded width " + std::to_string(p->width_um) + " um: alpha_L = 0");
                continue;
            }
            w.push_back(p->width_um);
            inv.push_back(1.0 / a);
        }
        const std::set<double> distinct(w.begin(), w.end());
        if (distinct.size() < 3) {
            throw InvalidInput(std::string("fit_inverse_alpha_vs_width: ") + end_type_name(type) +
                               " group needs at least 3 distinct widths");
        }
        const auto reg = numcore::linreg(w, inv);
        fit.slope = reg.slope;
        fit.intercept = reg.intercept;
        fit.r_squared = reg.r_squared;
        fit.slope_se = reg.slope_se;
        fit.intercept_se = reg.intercept_se;
        fit.intercept_deviation = reg.intercept - 1.0;
        fit.points_used = w.size();
        out.emplace(type, std::move(fit));
    }
    return out;
}

} // namespace reskit::kinetic

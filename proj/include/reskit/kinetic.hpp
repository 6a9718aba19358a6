#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace reskit::kinetic {

enum class EndType { open, short_ended };

const char* end_type_name(EndType t);
// Accepts "open" and "short". Throws InvalidInput otherwise.
EndType parse_end_type(const std::string& s);

struct WidthFrequencyPoint {
    double width_um = 0.0;
    double f_meas_hz = 0.0;
    double f_design_hz = 0.0;
    EndType end_type = EndType::open;
};

// 1 - (f_meas/f_design)^2. Rejects f_meas > f_design and non-positive inputs.
double alpha_fraction(double f_meas_hz, double f_design_hz);

struct InverseAlphaFit {
    double slope = 0.0;      // per um
    double intercept = 0.0;
    double r_squared = 0.0;
    double slope_se = 0.0;
    double intercept_se = 0.0;
    double intercept_deviation = 0.0;  // intercept - 1
    std::size_t points_used = 0;
    std::size_t points_excluded = 0;
    std::vector<std::string> warnings;
};

// OLS of 1/alpha_L against width, one fit per end type present in the
// input. Points with alpha_L = 0 are dropped with a warning. A group with
// fewer than 3 distinct usable widths is rejected.
std::map<EndType, InverseAlphaFit> fit_inverse_alpha_vs_width(std::span<const WidthFrequencyPoint> points);

} // namespace reskit::kinetic

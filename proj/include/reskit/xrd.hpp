#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reskit/numcore.hpp"

namespace reskit::xrd {

using numcore::Estimate;

// Height-normalized pseudo-Voigt: eta L + (1 - eta) G with a shared FWHM.
struct PseudoVoigtPeak {
    double amplitude = 1.0;     // counts at the center
    double center_2theta = 0.0; // deg
    double fwhm = 0.1;          // deg
    double eta = 0.5;
    std::optional<double> r_squared;
};

double pseudo_voigt_eval(const PseudoVoigtPeak& peak, double two_theta);

enum class Background { constant, linear };

struct PeakInit {
    std::string label;
    double center_2theta = 0.0;
    double fwhm = 0.1;
    double eta = 0.5;
    std::optional<double> amplitude;  // default: max - min of the window
    double window_half_width = 0.0;   // deg, 0 means 3 * fwhm
};

struct FittedPeak {
    std::string label;
    PseudoVoigtPeak peak;
    Estimate amplitude;
    Estimate center_2theta;
    Estimate fwhm;
    Estimate eta;
    double background_c0 = 0.0;  // counts at the window midpoint
    double background_c1 = 0.0;  // counts per deg
    double window_lo = 0.0;
    double window_hi = 0.0;
    std::size_t window_samples = 0;
    std::size_t window_group = 0;  // peaks sharing a merged window fit jointly
    double r_squared = 0.0;
    bool converged = false;
};

// Least-squares pseudo-Voigt + background fits. Overlapping windows are
// merged and their peaks fitted together with one background. Each peak
// center is kept within one initial FWHM of its guess.
// Throws InvalidInput when a window holds fewer than 10 samples or the
// input is not ascending in 2 theta.
std::vector<FittedPeak> fit_peaks(std::span<const double> two_theta, std::span<const double> counts,
                                  std::span<const PeakInit> peaks, Background background);

// d = n lambda / (2 sin theta). Requires 0 < 2 theta < 180 deg.
double bragg_spacing(double two_theta_deg, double lambda_nm, int order = 1);

// c = l d for l in {1, 2, 4}.
double c_lattice(double d_hkl_nm, int l_index);

// (d_meas - d_bulk) / d_bulk.
double out_of_plane_strain(double d_meas_nm, double d_bulk_nm);

struct LatticeResult {
    double d_hkl_nm = 0.0;
    std::optional<double> c_nm;
    std::optional<double> strain_zz;
};

LatticeResult lattice_from_peak(double two_theta_deg, double lambda_nm, int order, std::optional<int> l_index,
                                std::optional<double> d_bulk_nm);

} // namespace reskit::xrd

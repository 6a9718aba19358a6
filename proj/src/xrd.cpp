#include "reskit/xrd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "reskit/constants.hpp"
#include "reskit/errors.hpp"

namespace reskit::xrd {

namespace {

constexpr std::size_t kMinWindowSamples = 10;
constexpr std::size_t kPerPeak = 4;

struct Window {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> peaks;
};

double profile(double amplitude, double center, double fwhm, double eta, double x) {
    const double u = (x - center) / fwhm;
    const double g = std::exp(-4.0 * std::log(2.0) * u * u);
    const double l = 1.0 / (1.0 + 4.0 * u * u);
    return amplitude * (eta * l + (1.0 - eta) * g);
}

std::vector<Window> merged_windows(std::span<const PeakInit> peaks) {
    std::vector<Window> ws;
    for (std::size_t k = 0; k < peaks.size(); ++k) {
        const double half = peaks[k].window_half_width > 0.0 ? peaks[k].window_half_width : 3.0 * peaks[k].fwhm;
        ws.push_back({peaks[k].center_2theta - half, peaks[k].center_2theta + half, {k}});
    }
    std::sort(ws.begin(), ws.end(), [](const Window& a, const Window& b) { return a.lo < b.lo; });
    std::vector<Window> out;
    for (auto& w : ws) {
        if (!out.empty() && w.lo <= out.back().hi) {
            out.back().hi = std::max(out.back().hi, w.hi);
            out.back().peaks.insert(out.back().peaks.end(), w.peaks.begin(), w.peaks.end());
        } else {
            out.push_back(std::move(w));
        }
    }
    return out;
}

std::size_t count_in(std::span<const double> x, double lo, double hi) {
    const auto a = std::lower_bound(x.begin(), x.end(), lo);
    const auto b = std::upper_bound(x.begin(), x.end(), hi);
    return static_cast<std::size_t>(b - a);
}

} // namespace

double pseudo_voigt_eval(const PseudoVoigtPeak& peak, double two_theta) {
    return profile(peak.amplitude, peak.center_2theta, peak.fwhm, peak.eta, two_theta);
}

std::vector<FittedPeak> fit_peaks(std::span<const double> two_theta, std::span<const double> counts,
                                  std::span<const PeakInit> peaks, Background background) {
    if (two_theta.size() != counts.size()) throw InvalidInput("fit_peaks: 2theta and counts lengths differ");
    if (peaks.empty()) throw InvalidInput("fit_peaks: no peaks requested");
    for (std::size_t i = 0; i < two_theta.size(); ++i) {
        if (!std::isfinite(two_theta[i]) || !std::isfinite(counts[i])) throw InvalidInput("fit_peaks: non-finite sample");
        if (i > 0 && !(two_theta[i] > two_theta[i - 1])) throw InvalidInput("fit_peaks: 2theta must be strictly ascending");
    }
    for (const auto& p : peaks) {
        if (!(p.fwhm > 0.0)) throw InvalidInput("fit_peaks: initial fwhm must be positive");
        if (!(p.eta >= 0.0 && p.eta <= 1.0)) throw InvalidInput("fit_peaks: initial eta must lie in [0, 1]");
        const double half = p.window_half_width > 0.0 ? p.window_half_width : 3.0 * p.fwhm;
        if (count_in(two_theta, p.center_2theta - half, p.center_2theta + half) < kMinWindowSamples) {
            throw InvalidInput("fit_peaks: window of peak '" + p.label + "' holds fewer than 10 samples");
        }
    }

    std::vector<FittedPeak> out(peaks.size());
    const auto windows = merged_windows(peaks);
    const std::size_t n_bg = background == Background::linear ? 2 : 1;

    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
        const Window& w = windows[wi];
        const auto first = static_cast<std::size_t>(std::lower_bound(two_theta.begin(), two_theta.end(), w.lo) - two_theta.begin());
        const std::size_t n = count_in(two_theta, w.lo, w.hi);
        const std::span<const double> x = two_theta.subspan(first, n);
        const std::span<const double> y = counts.subspan(first, n);
        const double mid = 0.5 * (w.lo + w.hi);
        const double half_width = 0.5 * (w.hi - w.lo);

        const auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
        const double range = *ymax_it - *ymin_it;
        const double y_scale = range > 0.0 ? range : std::max(1.0, std::abs(*ymax_it));

        // Internal parameters per peak: amplitude / y_scale, (center - c0) / fwhm0,
        // fwhm / fwhm0, eta. Background: c0 / y_scale, c1 * half_width / y_scale.
        const std::size_t np = w.peaks.size();
        const std::size_t m = np * kPerPeak + n_bg;
        std::vector<double> init(m), lower(m), upper(m), scale(m);
        const double inf = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < np; ++k) {
            const PeakInit& p = peaks[w.peaks[k]];
            const std::size_t o = k * kPerPeak;
            const double amp0 = p.amplitude ? *p.amplitude : range;
            init[o] = amp0 / y_scale;
            lower[o] = -inf;
            upper[o] = inf;
            scale[o] = y_scale;
            init[o + 1] = 0.0;
            lower[o + 1] = std::max(-1.0, (w.lo - p.center_2theta) / p.fwhm);
            upper[o + 1] = std::min(1.0, (w.hi - p.center_2theta) / p.fwhm);
            scale[o + 1] = p.fwhm;
            init[o + 2] = 1.0;
            lower[o + 2] = 0.1;
            upper[o + 2] = 10.0;
            scale[o + 2] = p.fwhm;
            init[o + 3] = p.eta;
            lower[o + 3] = 0.0;
            upper[o + 3] = 1.0;
            scale[o + 3] = 1.0;
        }
        const std::size_t ob = np * kPerPeak;
        init[ob] = std::min(y.front(), y.back()) / y_scale;
        lower[ob] = -inf;
        upper[ob] = inf;
        scale[ob] = y_scale;
        if (n_bg == 2) {
            init[ob + 1] = 0.0;
            lower[ob + 1] = -inf;
            upper[ob + 1] = inf;
            scale[ob + 1] = y_scale / half_width;
        }

        auto unpack = [&](std::span<const double> q, std::size_t k, double& amp, double& c, double& fw, double& eta) {
            const PeakInit& p = peaks[w.peaks[k]];
            const std::size_t o = k * kPerPeak;
            amp = q[o] * y_scale;
            c = p.center_2theta + q[o + 1] * p.fwhm;
            fw = q[o + 2] * p.fwhm;
            eta = q[o + 3];
        };
        auto model = [&](std::span<const double> q, double xv) {
            double v = q[ob] * y_scale;
            if (n_bg == 2) v += q[ob + 1] * y_scale * (xv - mid) / half_width;
            for (std::size_t k = 0; k < np; ++k) {
                double amp, c, fw, eta;
                unpack(q, k, amp, c, fw, eta);
                v += profile(amp, c, fw, eta, xv);
            }
            return v;
        };

        numcore::FitProblem problem;
        problem.param_count = m;
        problem.data_count = n;
        problem.lower_bounds = lower;
        problem.upper_bounds = upper;
        problem.residuals = [&](std::span<const double> q, std::span<double> r) {
            for (std::size_t i = 0; i < n; ++i) r[i] = (model(q, x[i]) - y[i]) / y_scale;
        };
        numcore::FitOptions opts;
        opts.max_iter = 500;
        opts.tolerance = 1e-14;
        const auto fit = numcore::lm_fit(problem, init, opts);

        const double ymean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
        double rss = 0.0, tss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = y[i] - model(fit.params, x[i]);
            rss += e * e;
            tss += (y[i] - ymean) * (y[i] - ymean);
        }
        const double r2 = tss > 0.0 ? 1.0 - rss / tss : (rss == 0.0 ? 1.0 : 0.0);

        for (std::size_t k = 0; k < np; ++k) {
            FittedPeak& fp = out[w.peaks[k]];
            const std::size_t o = k * kPerPeak;
            double amp, c, fw, eta;
            unpack(fit.params, k, amp, c, fw, eta);
            fp.label = peaks[w.peaks[k]].label;
            fp.peak = {amp, c, fw, eta, r2};
            fp.amplitude = {amp, fit.standard_errors[o] * scale[o]};
            fp.center_2theta = {c, fit.standard_errors[o + 1] * scale[o + 1]};
            fp.fwhm = {fw, fit.standard_errors[o + 2] * scale[o + 2]};
            fp.eta = {eta, fit.standard_errors[o + 3]};
            fp.background_c0 = fit.params[ob] * y_scale;
            fp.background_c1 = n_bg == 2 ? fit.params[ob + 1] * scale[ob + 1] : 0.0;
            fp.window_lo = w.lo;
            fp.window_hi = w.hi;
            fp.window_samples = n;
            fp.window_group = wi;
            fp.r_squared = r2;
            fp.converged = fit.converged;
        }
    }
    return out;
}

double bragg_spacing(double two_theta_deg, double lambda_nm, int order) {
    if (!(two_theta_deg > 0.0 && two_theta_deg < 180.0)) throw InvalidInput("bragg_spacing: 2theta must lie in (0, 180) deg");
    if (!(lambda_nm > 0.0)) throw InvalidInput("bragg_spacing: wavelength must be positive");
    if (order < 1) throw InvalidInput("bragg_spacing: order must be at least 1");
    const double s = std::sin(two_theta_deg * constants::pi / 360.0);
    if (!(s > 0.0)) throw InvalidInput("bragg_spacing: sin(theta) is zero");
    return order * lambda_nm / (2.0 * s);
}

double c_lattice(double d_hkl_nm, int l_index) {
    if (l_index != 1 && l_index != 2 && l_index != 4) throw InvalidInput("c_lattice: l index must be 1, 2 or 4");
    if (!(d_hkl_nm > 0.0)) throw InvalidInput("c_lattice: spacing must be positive");
    return l_index * d_hkl_nm;
}

double out_of_plane_strain(double d_meas_nm, double d_bulk_nm) {
    if (!(d_bulk_nm > 0.0)) throw InvalidInput("out_of_plane_strain: bulk spacing must be positive");
    return (d_meas_nm - d_bulk_nm) / d_bulk_nm;
}

LatticeResult lattice_from_peak(double two_theta_deg, double lambda_nm, int order, std::optional<int> l_index,
                                std::optional<double> d_bulk_nm) {
    LatticeResult r;
    r.d_hkl_nm = bragg_spacing(two_theta_deg, lambda_nm, order);
    if (l_index) r.c_nm = c_lattice(r.d_hkl_nm, *l_index);
    if (d_bulk_nm) r.strain_zz = out_of_plane_strain(r.d_hkl_nm, *d_bulk_nm);
    return r;
}

} // namespace reskit::xrd

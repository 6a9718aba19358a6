#include <doctest.h>

#include <cmath>
#include <random>

#include "reskit/errors.hpp"
#include "reskit/xrd.hpp"

using namespace reskit;
using namespace reskit::xrd;

namespace {

constexpr double kKalpha1 = 0.154060;
constexpr double kKalpha2 = 0.154443;

struct TableRow {
    const char* label;
    double two_theta;
    double d_nm;
    double eta;
    double lambda;
};

const TableRow kTable[] = {
    {"beta-Ta 221", 30.1273, 0.2964, 0.1902, kKalpha1},
    {"beta-Ta 002", 33.4045, 0.2680, 0.2823, kKalpha1},
    {"c-TaN 220", 61.9634, 0.1496, 0.0984, kKalpha1},
    {"c-TiN 220", 62.2340, 0.1491, 0.4675, kKalpha1},
    {"beta-Ta 004 Ka1", 69.3937, 0.1353, 0.9678, kKalpha1},
    {"beta-Ta 004 Ka2", 69.5885, 0.1353, 0.8696, kKalpha2},
};

double oracle_pv(double amp, double c, double fwhm, double eta, double x) {
    const double u = (x - c) / fwhm;
    const double g = std::exp(-4.0 * std::log(2.0) * u * u);
    const double l = 1.0 / (1.0 + 4.0 * u * u);
    return amp * (eta * l + (1.0 - eta) * g);
}

std::vector<double> axis(double lo, double hi, double step) {
    std::vector<double> x;
    for (double v = lo; v <= hi + 1e-12; v += step) x.push_back(v);
    return x;
}

double rel(double got, double want) { return std::abs(got / want - 1.0); }

} // namespace

TEST_SUITE("xrd") {

TEST_CASE("pseudo-Voigt closed forms") {
    PseudoVoigtPeak p{250.0, 33.4, 0.3, 0.0, std::nullopt};
    CHECK(pseudo_voigt_eval(p, 33.4) == 250.0);
    p.eta = 1.0;
    CHECK(pseudo_voigt_eval(p, 33.4 + 0.15) == doctest::Approx(125.0).epsilon(1e-14));
    CHECK(pseudo_voigt_eval(p, 33.4 - 0.15) == doctest::Approx(125.0).epsilon(1e-14));
    p.eta = 0.5;
    CHECK(pseudo_voigt_eval(p, 33.4 + 0.15) == doctest::Approx(125.0).epsilon(1e-12));
    p.eta = 0.37;
    for (double x : {0.01, 0.1, 0.4, 2.0}) {
        CHECK(std::abs(pseudo_voigt_eval(p, 33.4 + x) - pseudo_voigt_eval(p, 33.4 - x)) < 1e-12);
        CHECK(pseudo_voigt_eval(p, 33.4 + x) == doctest::Approx(oracle_pv(250.0, 33.4, 0.3, 0.37, 33.4 + x)).epsilon(1e-14));
    }
}

TEST_CASE("tabulated peak spacings") {
    for (const auto& row : kTable) {
        INFO(row.label);
        CHECK(std::abs(bragg_spacing(row.two_theta, row.lambda) - row.d_nm) < 5e-5);
    }
    CHECK(std::abs(bragg_spacing(33.4045, kKalpha1) - 0.15406 / (2.0 * std::sin(33.4045 / 2.0 * M_PI / 180.0))) < 1e-15);
}

TEST_CASE("Bragg spacing is decreasing and validated") {
    double prev = INFINITY;
    for (double t = 1.0; t < 180.0; t += 0.5) {
        const double d = bragg_spacing(t, kKalpha1);
        CHECK(d < prev);
        prev = d;
    }
    CHECK(bragg_spacing(40.0, kKalpha1, 2) == doctest::Approx(2.0 * bragg_spacing(40.0, kKalpha1)).epsilon(1e-15));
    CHECK_THROWS_AS(bragg_spacing(0.0, kKalpha1), InvalidInput);
    CHECK_THROWS_AS(bragg_spacing(180.0, kKalpha1), InvalidInput);
    CHECK_THROWS_AS(bragg_spacing(30.0, -1.0), InvalidInput);
}

TEST_CASE("c lattice and strain") {
    CHECK(c_lattice(0.2680, 2) == doctest::Approx(0.5360).epsilon(1e-15));
    CHECK(c_lattice(0.1353, 4) == doctest::Approx(0.5412).epsilon(1e-15));
    CHECK(c_lattice(0.53, 1) == 0.53);
    CHECK_THROWS_AS(c_lattice(0.2, 3), InvalidInput);

    CHECK(out_of_plane_strain(0.268, 0.265) == doctest::Approx(0.0113207547).epsilon(1e-8));
    const double s = out_of_plane_strain(0.268, 0.265);
    CHECK(s >= 0.0098);
    CHECK(s <= 0.0117);
    CHECK(out_of_plane_strain(0.265, 0.265) == 0.0);
    // the 004 value lands outside 0.98-1.17 %; reported as computed
    CHECK(out_of_plane_strain(0.135, 0.133) == doctest::Approx(0.0150375940).epsilon(1e-8));
    CHECK_THROWS_AS(out_of_plane_strain(0.2, 0.0), InvalidInput);
}

TEST_CASE("c lattice is invariant under higher-order reflections") {
    const double c = 0.5375;
    // 00l reflections of the same lattice: d_00l = c / l
    for (int l : {2, 4}) {
        const double two_theta = 2.0 * std::asin(kKalpha1 / (2.0 * c / l)) * 180.0 / M_PI;
        CHECK(c_lattice(bragg_spacing(two_theta, kKalpha1), l) == doctest::Approx(c).epsilon(1e-12));
        // the same angle read as order l of the 001 plane
        CHECK(c_lattice(bragg_spacing(two_theta, kKalpha1, l), 1) == doctest::Approx(c).epsilon(1e-12));
    }
}

TEST_CASE("lattice from peak") {
    const auto r = lattice_from_peak(33.4045, kKalpha1, 1, 2, 0.265);
    CHECK(std::abs(r.d_hkl_nm - 0.2680) < 5e-5);
    REQUIRE(r.c_nm);
    CHECK(std::abs(*r.c_nm - 0.5360) < 1e-4);
    REQUIRE(r.strain_zz);
    CHECK(*r.strain_zz == doctest::Approx(out_of_plane_strain(r.d_hkl_nm, 0.265)));
    const auto bare = lattice_from_peak(61.9634, kKalpha1, 1, std::nullopt, std::nullopt);
    CHECK_FALSE(bare.c_nm);
    CHECK_FALSE(bare.strain_zz);
}

TEST_CASE("single peak round trip") {
    const auto x = axis(32.0, 35.0, 0.0202);
    std::vector<double> y;
    for (double v : x) y.push_back(oracle_pv(900.0, 33.4045, 0.25, 0.2823, v) + 40.0);
    const std::vector<PeakInit> init{{"002", 33.38, 0.3, 0.5, std::nullopt, 1.2}};
    const auto fits = fit_peaks(x, y, init, Background::constant);
    REQUIRE(fits.size() == 1);
    const auto& f = fits[0];
    CHECK(f.converged);
    CHECK(rel(f.center_2theta.value, 33.4045) < 1e-6);
    CHECK(rel(f.eta.value, 0.2823) < 1e-6);
    CHECK(rel(f.amplitude.value, 900.0) < 1e-6);
    CHECK(rel(f.fwhm.value, 0.25) < 1e-6);
    CHECK(rel(f.background_c0, 40.0) < 1e-6);
    CHECK(f.r_squared >= 1.0 - 1e-10);
    REQUIRE(f.peak.r_squared);
    CHECK(*f.peak.r_squared == f.r_squared);
}

TEST_CASE("two separated peaks with a linear background") {
    const auto x = axis(30.0, 65.0, 0.0202);
    std::vector<double> y;
    for (double v : x) {
        y.push_back(oracle_pv(300.0, 61.9634, 0.35, 0.0984, v) + oracle_pv(1200.0, 33.4045, 0.2, 0.2823, v) + 20.0 + 1.5 * (v - 50.0));
    }
    const std::vector<PeakInit> init{{"TaN", 61.95, 0.3, 0.5, std::nullopt, 1.5}, {"Ta002", 33.40, 0.25, 0.5, std::nullopt, 1.5}};
    const auto fits = fit_peaks(x, y, init, Background::linear);
    REQUIRE(fits.size() == 2);
    CHECK(fits[0].window_group != fits[1].window_group);
    CHECK(rel(fits[0].center_2theta.value, 61.9634) < 1e-5);
    CHECK(rel(fits[0].eta.value, 0.0984) < 1e-5);
    CHECK(rel(fits[0].amplitude.value, 300.0) < 1e-5);
    CHECK(rel(fits[1].center_2theta.value, 33.4045) < 1e-5);
    CHECK(rel(fits[1].eta.value, 0.2823) < 1e-5);
    CHECK(rel(fits[1].amplitude.value, 1200.0) < 1e-5);
    for (const auto& f : fits) CHECK(f.r_squared >= 1.0 - 1e-10);
}

TEST_CASE("overlapping windows are fitted jointly") {
    const auto x = axis(61.0, 63.2, 0.0202);
    std::vector<double> y;
    for (double v : x) y.push_back(oracle_pv(300.0, 61.9634, 0.2, 0.1, v) + oracle_pv(500.0, 62.2340, 0.2, 0.4675, v) + 10.0);
    const std::vector<PeakInit> init{{"TaN", 61.96, 0.2, 0.5, std::nullopt, 0.8}, {"TiN", 62.23, 0.2, 0.5, std::nullopt, 0.8}};
    const auto fits = fit_peaks(x, y, init, Background::constant);
    REQUIRE(fits.size() == 2);
    CHECK(fits[0].window_group == fits[1].window_group);
    CHECK(rel(fits[0].center_2theta.value, 61.9634) < 1e-5);
    CHECK(rel(fits[1].center_2theta.value, 62.2340) < 1e-5);
    CHECK(rel(fits[1].eta.value, 0.4675) < 1e-4);
}

TEST_CASE("flat background gives an amplitude consistent with zero") {
    const auto x = axis(40.0, 44.0, 0.0202);
    std::mt19937_64 eng(6);
    std::normal_distribution<double> n(0.0, 3.0);
    std::vector<double> y;
    for (std::size_t i = 0; i < x.size(); ++i) y.push_back(100.0 + n(eng));
    const std::vector<PeakInit> init{{"none", 42.0, 0.3, 0.5, 5.0, 1.5}};
    const auto f = fit_peaks(x, y, init, Background::constant).at(0);
    MESSAGE("A = " << f.amplitude.value << " +- " << f.amplitude.se);
    CHECK(std::abs(f.amplitude.value) < 2.0 * f.amplitude.se);
}

TEST_CASE("peak fit input checks") {
    const auto x = axis(30.0, 31.0, 0.1);
    std::vector<double> y(x.size(), 1.0);
    const std::vector<PeakInit> narrow{{"p", 30.5, 0.1, 0.5, std::nullopt, 0.2}};
    CHECK_THROWS_AS(fit_peaks(x, y, narrow, Background::constant), InvalidInput);
    auto rev = x;
    std::swap(rev[2], rev[3]);
    const std::vector<PeakInit> wide{{"p", 30.5, 0.1, 0.5, std::nullopt, 0.5}};
    CHECK_THROWS_AS(fit_peaks(rev, y, wide, Background::constant), InvalidInput);
}

}

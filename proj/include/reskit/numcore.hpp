#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace reskit::numcore {

// A point estimate with its standard error (NaN when unavailable).
struct Estimate {
    double value = 0.0;
    double se = std::numeric_limits<double>::quiet_NaN();
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
    bool contains(double v) const { return lo <= v && v <= hi; }
};

// value +- t(0.975, dof) * se.
Interval confidence_interval_95(const Estimate& e, int dof);

// Maps a parameter tuple to a residual vector. The output span has
// data_count entries and must be fully written.
using ResidualFn = std::function<void(std::span<const double> params, std::span<double> residuals)>;

struct FitProblem {
    ResidualFn residuals;
    std::size_t param_count = 0;
    std::size_t data_count = 0;
    std::optional<std::vector<double>> lower_bounds;
    std::optional<std::vector<double>> upper_bounds;
};

struct FitOptions {
    int max_iter = 200;
    double tolerance = 1e-10;
};

struct FitResult {
    std::vector<double> params;
    std::vector<double> standard_errors;  // NaN when covariance is unavailable
    int dof = 0;
    double residual_norm = 0.0;
    Eigen::MatrixXd covariance;
    bool covariance_available = false;
    bool converged = false;
    int iterations = 0;
    std::string message;

    // Residual variance ||r||^2 / dof.
    double residual_variance() const;
};

// Damped Gauss-Newton (Levenberg-Marquardt) with central-difference
// Jacobians, box bounds by projection, and covariance
// (J^T J)^-1 * ||r||^2 / dof at the returned point.
//
// Throws InvalidInput for data_count < param_count, init outside the
// bounds, inverted bounds, or non-finite residuals at init.
FitResult lm_fit(const FitProblem& problem, std::span<const double> init, const FitOptions& options = {});

// Central-difference Jacobian (data_count x param_count), step
// max(1e-8, 1e-6*|p|), one-sided next to a bound.
Eigen::MatrixXd numeric_jacobian(const FitProblem& problem, std::span<const double> params);

struct OriginRegression {
    double slope = 0.0;
    std::optional<double> slope_se;  // absent for a single point (dof = 0)
    double residual_norm = 0.0;
    int dof = 0;
};

// Least squares y = slope * x.
OriginRegression linreg_origin(std::span<const double> xs, std::span<const double> ys);

struct LinearRegression {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double slope_se = 0.0;
    double intercept_se = 0.0;
    int dof = 0;
};

// Ordinary least squares y = slope * x + intercept. Needs two distinct xs.
LinearRegression linreg(std::span<const double> xs, std::span<const double> ys);

double weighted_mean(std::span<const double> values, std::span<const double> weights);

// Normalized Gaussian kernel truncated at +-4 sigma. Near the edges the
// kernel is renormalized over the available samples.
std::vector<double> gaussian_smooth(std::span<const double> series, double sigma_points);

// Quantile (inverse CDF) of Student's t with dof degrees of freedom.
double student_t_quantile(int dof, double p);

// Stream-splitting seed: identical (seed, index) pairs always give the same
// engine state, independent of evaluation order.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

// Engine for stream `index` of a run seeded with `seed`.
std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t index = 0);

// One Student-t variate. Throws InvalidInput for dof < 1.
double student_t_draw(int dof, std::mt19937_64& engine);

// Nearest-rank order statistic for probability p in (0,1). Sorts a copy.
double percentile(std::span<const double> samples, double p);

} // namespace reskit::numcore

#include "reskit/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "reskit/errors.hpp"

namespace reskit::numcore {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void validate(const FitProblem& problem, std::span<const double> init) {
    if (!problem.residuals) throw InvalidInput("lm_fit: residual evaluator is empty");
    if (problem.param_count == 0) throw InvalidInput("lm_fit: no parameters");
    if (init.size() != problem.param_count) throw InvalidInput("lm_fit: init arity does not match param_count");
    if (problem.data_count < problem.param_count) {
        throw InvalidInput("lm_fit: data_count (" + std::to_string(problem.data_count) + ") < param_count (" +
                           std::to_string(problem.param_count) + ")");
    }
    const auto check_bounds = [&](const std::optional<std::vector<double>>& b, const char* which) {
        if (b && b->size() != problem.param_count) throw InvalidInput(std::string("lm_fit: ") + which + " bounds arity");
    };
    check_bounds(problem.lower_bounds, "lower");
    check_bounds(problem.upper_bounds, "upper");
    for (std::size_t j = 0; j < problem.param_count; ++j) {
        const double lo = problem.lower_bounds ? (*problem.lower_bounds)[j] : -INFINITY;
        const double hi = problem.upper_bounds ? (*problem.upper_bounds)[j] : INFINITY;
        if (lo > hi) throw InvalidInput("lm_fit: lower bound exceeds upper bound for parameter " + std::to_string(j));
        if (!std::isfinite(init[j])) throw InvalidInput("lm_fit: non-finite init for parameter " + std::to_string(j));
        if (init[j] < lo || init[j] > hi) throw InvalidInput("lm_fit: init outside bounds for parameter " + std::to_string(j));
    }
}

double lower_of(const FitProblem& p, std::size_t j) { return p.lower_bounds ? (*p.lower_bounds)[j] : -INFINITY; }
double upper_of(const FitProblem& p, std::size_t j) { return p.upper_bounds ? (*p.upper_bounds)[j] : INFINITY; }

Eigen::VectorXd evaluate(const FitProblem& problem, std::span<const double> params) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(problem.data_count));
    problem.residuals(params, std::span<double>(r.data(), problem.data_count));
    return r;
}

// Column norms of J used for Marquardt scaling; zero columns keep scale 1.
Eigen::VectorXd column_scale(const Eigen::MatrixXd& jac) {
    Eigen::VectorXd d = jac.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < d.size(); ++j) {
        if (!(d[j] > 0.0) || !std::isfinite(d[j])) d[j] = 1.0;
    }
    return d;
}

void fill_covariance(const FitProblem& problem, FitResult& result) {
    const auto n = static_cast<Eigen::Index>(problem.param_count);
    result.covariance = Eigen::MatrixXd::Constant(n, n, kNaN);
    result.standard_errors.assign(problem.param_count, kNaN);
    result.covariance_available = false;

    const Eigen::MatrixXd jac = numeric_jacobian(problem, result.params);
    if (!jac.allFinite()) {
        result.message += "; jacobian not finite";
        return;
    }
    const Eigen::VectorXd d = column_scale(jac);
    const Eigen::MatrixXd js = jac * d.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd normal = js.transpose() * js;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    if (ev.minCoeff() <= 1e-14 * std::max(ev.maxCoeff(), 1e-300)) {
        result.converged = false;
        result.message += "; singular normal equations";
        return;
    }
    if (result.dof <= 0) {
        result.message += "; zero degrees of freedom";
        return;
    }
    const Eigen::MatrixXd inv_scaled =
        eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    const Eigen::MatrixXd dinv = d.cwiseInverse().asDiagonal();
    result.covariance = dinv * inv_scaled * dinv * result.residual_variance();
    result.covariance = 0.5 * (result.covariance + result.covariance.transpose());
    for (Eigen::Index j = 0; j < n; ++j) {
        result.standard_errors[static_cast<std::size_t>(j)] = std::sqrt(std::max(0.0, result.covariance(j, j)));
    }
    result.covariance_available = true;
}

} // namespace

double FitResult::residual_variance() const {
    if (dof <= 0) return kNaN;
    return residual_norm * residual_norm / dof;
}

Eigen::MatrixXd numeric_jacobian(const FitProblem& problem, std::span<const double> params) {
    const auto m = static_cast<Eigen::Index>(problem.data_count);
    const auto n = problem.param_count;
    Eigen::MatrixXd jac(m, static_cast<Eigen::Index>(n));
    std::vector<double> p(params.begin(), params.end());
    Eigen::VectorXd r_plus(m), r_minus(m);
    for (std::size_t j = 0; j < n; ++j) {
        const double p0 = params[j];
        const double h = std::max(1e-8, 1e-6 * std::abs(p0));
        double hi = p0 + h;
        double lo = p0 - h;
        if (hi > upper_of(problem, j)) hi = p0;
        if (lo < lower_of(problem, j)) lo = p0;
        if (hi == lo) {  // bounds pinch the parameter; fall back to the raw step
            hi = p0 + h;
            lo = p0;
        }
        p[j] = hi;
        problem.residuals(p, std::span<double>(r_plus.data(), problem.data_count));
        p[j] = lo;
        problem.residuals(p, std::span<double>(r_minus.data(), problem.data_count));
        p[j] = p0;
        jac.col(static_cast<Eigen::Index>(j)) = (r_plus - r_minus) / (hi - lo);
    }
    return jac;
}

FitResult lm_fit(const FitProblem& problem, std::span<const double> init, const FitOptions& options) {
    validate(problem, init);
    const std::size_t n = problem.param_count;

    FitResult result;
    result.params.assign(init.begin(), init.end());
    result.dof = static_cast<int>(problem.data_count) - static_cast<int>(n);

    Eigen::VectorXd r = evaluate(problem, result.params);
    if (!r.allFinite()) throw InvalidInput("lm_fit: non-finite residuals at init");
    double cost = r.squaredNorm();

    double lambda = 1e-3;
    constexpr double kLambdaMax = 1e16;
    std::vector<double> trial(n);

    for (result.iterations = 0; result.iterations < options.max_iter; ++result.iterations) {
        if (cost == 0.0) {
            result.converged = true;
            result.message = "zero residual";
            break;
        }
        const Eigen::MatrixXd jac = numeric_jacobian(problem, result.params);
        if (!jac.allFinite()) {
            result.message = "non-finite jacobian";
            break;
        }
        const Eigen::VectorXd d = column_scale(jac);
        const Eigen::MatrixXd js = jac * d.cwiseInverse().asDiagonal();
        Eigen::VectorXd grad = js.transpose() * r;
        Eigen::MatrixXd normal = js.transpose() * js;
        // Parameters held at a bound by an outward-pointing gradient are
        // frozen for this step and do not count against convergence.
        for (std::size_t j = 0; j < n; ++j) {
            const auto k = static_cast<Eigen::Index>(j);
            const bool pinned = (result.params[j] <= lower_of(problem, j) && grad[k] > 0.0) ||
                                (result.params[j] >= upper_of(problem, j) && grad[k] < 0.0);
            if (!pinned) continue;
            grad[k] = 0.0;
            normal.row(k).setZero();
            normal.col(k).setZero();
            normal(k, k) = 1.0;
        }
        if (grad.cwiseAbs().maxCoeff() <= options.tolerance * std::sqrt(cost)) {
            result.converged = true;
            result.message = "gradient tolerance";
            break;
        }

        bool accepted = false;
        bool stalled = false;
        while (!accepted) {
            Eigen::MatrixXd damped = normal;
            damped.diagonal().array() += lambda;
            const Eigen::VectorXd step_scaled = damped.ldlt().solve(-grad);
            const Eigen::VectorXd step = step_scaled.cwiseQuotient(d);
            bool moved = false;
            for (std::size_t j = 0; j < n; ++j) {
                const double v = std::clamp(result.params[j] + step[static_cast<Eigen::Index>(j)],
                                            lower_of(problem, j), upper_of(problem, j));
                trial[j] = v;
                moved = moved || v != result.params[j];
            }
            if (!moved) {
                stalled = true;
                break;
            }
            const Eigen::VectorXd r_trial = evaluate(problem, trial);
            const double cost_trial = r_trial.allFinite() ? r_trial.squaredNorm() : INFINITY;
            if (cost_trial < cost) {
                const double norm_change = (std::sqrt(cost) - std::sqrt(cost_trial)) / std::sqrt(cost);
                result.params = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = std::max(lambda * 0.3, 1e-12);
                accepted = true;
                if (norm_change < options.tolerance) {
                    result.converged = true;
                    result.message = "residual norm tolerance";
                }
            } else {
                lambda *= 10.0;
                if (lambda > kLambdaMax) {
                    stalled = true;
                    break;
                }
            }
        }
        if (stalled) {
            // No descent step exists at working precision: a numerical minimum.
            result.converged = true;
            result.message = "no further reduction possible";
            break;
        }
        if (result.converged) {
            ++result.iterations;
            break;
        }
    }
    if (!result.converged && result.message.empty()) result.message = "max_iter reached";

    result.residual_norm = std::sqrt(cost);
    fill_covariance(problem, result);
    return result;
}

OriginRegression linreg_origin(std::span<const double> xs, std::span<const double> ys) {
    if (xs.empty() || xs.size() != ys.size()) throw InvalidInput("linreg_origin: sequences must be nonempty and equal length");
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    if (!(sxx > 0.0)) throw InvalidInput("linreg_origin: all xs are zero");
    OriginRegression out;
    out.slope = sxy / sxx;
    double rss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - out.slope * xs[i];
        rss += e * e;
    }
    out.residual_norm = std::sqrt(rss);
    out.dof = static_cast<int>(xs.size()) - 1;
    if (out.dof > 0) out.slope_se = std::sqrt(rss / out.dof / sxx);
    return out;
}

LinearRegression linreg(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() < 2 || xs.size() != ys.size()) throw InvalidInput("linreg: need at least two paired points");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw InvalidInput("linreg: xs are all identical");
    LinearRegression out;
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - (out.slope * xs[i] + out.intercept);
        rss += e * e;
    }
    out.r_squared = syy > 0.0 ? 1.0 - rss / syy : 1.0;
    out.dof = static_cast<int>(xs.size()) - 2;
    if (out.dof > 0) {
        const double s2 = rss / out.dof;
        out.slope_se = std::sqrt(s2 / sxx);
        out.intercept_se = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
    } else {
        out.slope_se = kNaN;
        out.intercept_se = kNaN;
    }
    return out;
}

double weighted_mean(std::span<const double> values, std::span<const double> weights) {
    if (values.empty() || values.size() != weights.size()) throw InvalidInput("weighted_mean: lengths differ or empty");
    double sw = 0.0, swv = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(weights[i] >= 0.0)) throw InvalidInput("weighted_mean: negative weight");
        sw += weights[i];
        swv += weights[i] * values[i];
    }
    if (!(sw > 0.0)) throw InvalidInput("weighted_mean: zero total weight");
    return swv / sw;
}

std::vector<double> gaussian_smooth(std::span<const double> series, double sigma_points) {
    if (series.empty()) throw InvalidInput("gaussian_smooth: empty series");
    if (!(sigma_points >= 0.0)) throw InvalidInput("gaussian_smooth: sigma must be nonnegative");
    std::vector<double> out(series.begin(), series.end());
    if (sigma_points == 0.0) return out;

    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma_points));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const double t = static_cast<double>(k) / sigma_points;
        kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * t * t);
    }
    const auto n = static_cast<std::ptrdiff_t>(series.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double acc = 0.0, wsum = 0.0;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - radius);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + radius);
        for (std::ptrdiff_t j = lo; j <= hi; ++j) {
            const double w = kernel[static_cast<std::size_t>(j - i + radius)];
            acc += w * series[static_cast<std::size_t>(j)];
            wsum += w;
        }
        out[static_cast<std::size_t>(i)] = acc / wsum;
    }
    return out;
}

double student_t_quantile(int dof, double p) {
    if (dof < 1) throw InvalidInput("student_t_quantile: dof must be >= 1");
    if (!(p > 0.0 && p < 1.0)) throw InvalidInput("student_t_quantile: p must lie in (0,1)");
    const boost::math::students_t dist(static_cast<double>(dof));
    return boost::math::quantile(dist, p);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer over a golden-ratio stride.
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(mix_seed(seed, index));
}

double student_t_draw(int dof, std::mt19937_64& engine) {
    if (dof < 1) throw InvalidInput("student_t_draw: dof must be >= 1");
    std::student_t_distribution<double> dist(static_cast<double>(dof));
    return dist(engine);
}

double percentile(std::span<const double> samples, double p) {
    if (samples.empty()) throw InvalidInput("percentile: empty sample");
    if (!(p > 0.0 && p < 1.0)) throw InvalidInput("percentile: p must lie in (0,1)");
    std::vector<double> sorted(samples.begin(), samples.end());
    const auto n = sorted.size();
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
    return sorted[rank - 1];
}

Interval confidence_interval_95(const Estimate& e, int dof) {
    if (dof < 1 || !std::isfinite(e.se)) return {kNaN, kNaN};
    const double half = student_t_quantile(dof, 0.975) * e.se;
    return {e.value - half, e.value + half};
}

} // namespace reskit::numcore

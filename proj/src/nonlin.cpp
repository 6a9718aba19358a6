#include "reskit/nonlin.hpp"

#include <algorithm>
#include <cmath>

#include "reskit/constants.hpp"
#include "reskit/errors.hpp"
#include "reskit/parallel.hpp"

namespace reskit::nonlin {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Parameter vector in respipe::FullParam order.
using ParamVec = Eigen::Matrix<double, respipe::kFullParamCount, 1>;

ParamVec point_params(const FullFitResult& fit) {
    ParamVec p;
    p << fit.a.value, fit.alpha.value, fit.phi.value, fit.q_l.value, fit.q_c.value, fit.f_r0.value, fit.beta.value;
    return p;
}

ParamVec point_errors(const FullFitResult& fit) {
    ParamVec s;
    s << fit.a.se, fit.alpha.se, fit.phi.se, fit.q_l.se, fit.q_c.se, fit.f_r0.se, fit.beta.se;
    return s;
}

struct Sample {
    double e_star;
    double a_n0;
};

// E* and a_n0 for one parameter set with f, z and P_g held fixed.
class Kernel {
public:
    Kernel(std::span<const double> f, std::span<const cdouble> z, double p_g) : f_(f), z_(z), p_g_(p_g) {}

    Sample operator()(const ParamVec& p) const {
        const double a = p[respipe::kA];
        const cdouble off = std::polar(a, p[respipe::kAlpha]);
        const double q_l = p[respipe::kQl];
        const double q_c = p[respipe::kQc];
        const double f_r0 = p[respipe::kFr0];
        const double beta = p[respipe::kBeta];
        const double peak = 2.0 * q_l * q_l / q_c * p_g_ / constants::two_pi;
        double sxy = 0.0;
        double sxx = 0.0;
        for (std::size_t i = 0; i < f_.size(); ++i) {
            const double dx = -beta * std::norm(z_[i] - off);
            const double f_r = f_r0 * (1.0 + dx);
            const double x = (f_[i] - f_r) / f_r;
            const double e = peak / (1.0 + 4.0 * q_l * q_l * x * x) / f_r;
            sxy += dx * e;
            sxx += dx * dx;
        }
        Sample s;
        s.e_star = sxx > 0.0 ? -sxy / sxx : INFINITY;
        s.a_n0 = 2.0 * q_l * q_l * q_l / q_c * p_g_ / (constants::two_pi * f_r0 * s.e_star);
        return s;
    }

private:
    std::span<const double> f_;
    std::span<const cdouble> z_;
    double p_g_;
};

struct Sampler {
    ParamVec center;
    ParamVec scale;
    Eigen::MatrixXd mix;  // lower factor of the covariance when correlated
    bool correlated = false;
    int dof = 0;
    std::uint64_t seed = 0;

    ParamVec draw(std::size_t index) const {
        std::mt19937_64 engine = numcore::seeded_engine(seed, index);
        ParamVec t;
        for (Eigen::Index j = 0; j < t.size(); ++j) t[j] = numcore::student_t_draw(dof, engine);
        if (correlated) return center + mix * t;
        return center + scale.cwiseProduct(t);
    }
};

Sampler make_sampler(const FullFitResult& fit, const BootstrapOptions& options) {
    if (fit.dof <= 0) throw InvalidInput("bootstrap_nonlin: fit has no residual degrees of freedom");
    Sampler s;
    s.center = point_params(fit);
    s.scale = point_errors(fit);
    s.dof = fit.dof;
    s.seed = options.seed;
    if (!s.scale.allFinite()) throw InvalidInput("bootstrap_nonlin: fit carries no standard errors");
    if (options.full_covariance) {
        if (!fit.covariance_available) throw InvalidInput("bootstrap_nonlin: covariance unavailable for correlated draws");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.covariance);
        const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
        s.mix = eig.eigenvectors() * ev.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
        s.correlated = true;
    }
    return s;
}

BootstrapDistribution summarize(std::vector<double> samples, double point) {
    BootstrapDistribution d;
    d.point_estimate = point;
    if (!samples.empty()) {
        d.p2_5 = numcore::percentile(samples, 0.025);
        d.p97_5 = numcore::percentile(samples, 0.975);
    } else {
        d.p2_5 = d.p97_5 = kNaN;
    }
    d.samples = std::move(samples);
    return d;
}

template <typename Loop>
BootstrapResult run_bootstrap(const FullFitResult& fit, double p_g_w, std::span<const double> freqs_hz,
                              std::span<const cdouble> z, const BootstrapOptions& options, Loop&& loop) {
    if (freqs_hz.size() != z.size() || z.empty()) throw InvalidInput("bootstrap_nonlin: bad trace");
    if (!(p_g_w > 0.0)) throw InvalidInput("bootstrap_nonlin: P_g must be positive");
    const Sampler sampler = make_sampler(fit, options);
    const Kernel kernel(freqs_hz, z, p_g_w);
    const Sample point = kernel(sampler.center);
    if (!std::isfinite(point.e_star)) throw InvalidInput("bootstrap_nonlin: E* unavailable for a linear fit");

    std::vector<double> e_star(options.iterations), a_n0(options.iterations);
    loop(options.iterations, [&](std::size_t i) {
        const Sample s = kernel(sampler.draw(i));
        e_star[i] = s.e_star;
        a_n0[i] = s.a_n0;
    });
    return {summarize(std::move(e_star), point.e_star), summarize(std::move(a_n0), point.a_n0)};
}

} // namespace

std::vector<double> freq_shift(const FullFitResult& fit, std::span<const cdouble> z) {
    const cdouble off = std::polar(fit.a.value, fit.alpha.value);
    std::vector<double> dx(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) dx[i] = -fit.beta.value * std::norm(z[i] - off);
    return dx;
}

double stored_energy_at(double q_l, double q_c, double p_g_w, double f_hz, double f_r_hz) {
    const double x = (f_hz - f_r_hz) / f_r_hz;
    return (2.0 * q_l * q_l / q_c) / (1.0 + 4.0 * q_l * q_l * x * x) * p_g_w / (constants::two_pi * f_r_hz);
}

std::vector<double> stored_energy(const FullFitResult& fit, double p_g_w, std::span<const double> freqs_hz,
                                  std::span<const cdouble> z) {
    if (freqs_hz.size() != z.size()) throw InvalidInput("stored_energy: length mismatch");
    const std::vector<double> dx = freq_shift(fit, z);
    std::vector<double> e(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        e[i] = stored_energy_at(fit.q_l.value, fit.q_c.value, p_g_w, freqs_hz[i], fit.f_r0.value * (1.0 + dx[i]));
    }
    return e;
}

ScalingEnergy extract_scaling_energy(std::span<const double> energy_j, std::span<const double> delta_x) {
    if (energy_j.size() != delta_x.size() || energy_j.empty()) throw InvalidInput("extract_scaling_energy: bad arrays");
    ScalingEnergy out;
    const bool all_zero = std::all_of(delta_x.begin(), delta_x.end(), [](double v) { return v == 0.0; });
    if (all_zero) return out;
    const numcore::OriginRegression reg = numcore::linreg_origin(delta_x, energy_j);
    out.available = true;
    out.e_star_j = -reg.slope;
    out.se_j = reg.slope_se;
    out.dof = reg.dof;
    return out;
}

double nonlinearity_parameter(double q_l, double q_c, double f_r0_hz, double p_g_w, double e_star_j) {
    return 2.0 * q_l * q_l * q_l / q_c * p_g_w / (constants::two_pi * f_r0_hz * e_star_j);
}

double nonlinearity_parameter(const FullFitResult& fit, double p_g_w, double e_star_j) {
    return nonlinearity_parameter(fit.q_l.value, fit.q_c.value, fit.f_r0.value, p_g_w, e_star_j);
}

BootstrapResult bootstrap_nonlin(const FullFitResult& fit, double p_g_w, std::span<const double> freqs_hz,
                                 std::span<const cdouble> z, const BootstrapOptions& options) {
    return run_bootstrap(fit, p_g_w, freqs_hz, z, options, [&](std::size_t n, const auto& body) {
        parallel::for_each_index(n, options.jobs, body);
    });
}

BootstrapResult bootstrap_nonlin_serial(const FullFitResult& fit, double p_g_w, std::span<const double> freqs_hz,
                                        std::span<const cdouble> z, const BootstrapOptions& options) {
    return run_bootstrap(fit, p_g_w, freqs_hz, z, options, [](std::size_t n, const auto& body) {
        for (std::size_t i = 0; i < n; ++i) body(i);
    });
}

NonlinExtraction extract(const FullFitResult& fit, double p_g_w, std::span<const double> freqs_hz, std::span<const cdouble> z,
                         const BootstrapOptions& options) {
    NonlinExtraction out;
    out.delta_x = freq_shift(fit, z);
    out.energy_j = stored_energy(fit, p_g_w, freqs_hz, z);
    out.e_star = extract_scaling_energy(out.energy_j, out.delta_x);
    out.seed = options.seed;
    if (!out.e_star.available) {
        out.a_n0 = kNaN;
        out.e_star_per_photon = kNaN;
        return out;
    }
    out.a_n0 = nonlinearity_parameter(fit, p_g_w, out.e_star.e_star_j);
    out.e_star_per_photon = out.e_star.e_star_j / (constants::hbar * constants::two_pi * fit.f_r0.value);
    if (options.iterations > 0) {
        const BootstrapResult boot = bootstrap_nonlin(fit, p_g_w, freqs_hz, z, options);
        out.e_star_ci95 = Interval{boot.e_star_j.p2_5, boot.e_star_j.p97_5};
        out.a_n0_ci95 = Interval{boot.a_n0.p2_5, boot.a_n0.p97_5};
        out.bootstrap_iterations = options.iterations;
    }
    return out;
}

WeightedEstimate weighted_e_star(std::span<const double> e_star_j, std::span<const double> ci_widths_j) {
    if (e_star_j.size() != ci_widths_j.size()) throw InvalidInput("weighted_e_star: length mismatch");
    WeightedEstimate out;
    std::vector<double> values, weights;
    for (std::size_t i = 0; i < e_star_j.size(); ++i) {
        const double w = ci_widths_j[i];
        if (!(w > 0.0) || !std::isfinite(w) || !std::isfinite(e_star_j[i])) {
            out.warnings.push_back("point " + std::to_string(i) + " dropped: confidence interval width is not positive");
            continue;
        }
        values.push_back(e_star_j[i]);
        weights.push_back(1.0 / (w * w));
    }
    if (values.empty()) throw InvalidInput("weighted_e_star: no usable points");
    out.value = numcore::weighted_mean(values, weights);
    out.used = values.size();
    // sigma_i = width_i / (2 * 1.96), so sum 1/sigma_i^2 = (2 * 1.96)^2 sum w_i.
    double sum_w = 0.0;
    for (double w : weights) sum_w += w;
    const double z = 1.959963984540054;
    const double sigma = 1.0 / (2.0 * z * std::sqrt(sum_w));
    out.ci95 = {out.value - z * sigma, out.value + z * sigma};
    return out;
}

double condensation_energy(const CondensationInputs& in) {
    if (!(in.n0_per_um3_ev > 0.0) || !(in.t_c_k > 0.0) || !(in.volume_um3 > 0.0)) {
        throw InvalidInput("condensation_energy: inputs must be positive");
    }
    const double delta_ev = 1.75 * constants::boltzmann_ev * in.t_c_k;
    return in.n0_per_um3_ev * delta_ev * delta_ev * in.volume_um3 / 2.0 * constants::elementary_charge;
}

} // namespace reskit::nonlin

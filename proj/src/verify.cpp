#include "mipnerf/verify.hpp"

#include "mipnerf/dataset.hpp"
#include "mipnerf/encoding.hpp"
#include "mipnerf/geometry.hpp"
#include "mipnerf/oracle.hpp"
#include "mipnerf/renderer.hpp"
#include "mipnerf/rng.hpp"
#include "mipnerf/trainer.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

namespace mipnerf {

namespace {

// Streams of the verification RNG, one per check.
enum Stream : std::uint64_t {
    kFrustumParams = 0x100,
    kFrustumSamples,
    kLiftParams,
    kLiftSamples,
    kNaiveParams,
    kCovParams,
    kCylinderParams,
    kCylinderSamples,
    kSamplerParams,
    kSamplerInverse,
    kSamplerRejection,
    kTrigSamples,
    kIpeParams,
    kIpeSamples,
    kPeParams,
    kApproxParams,
    kApproxSamples,
    kProfileParams,
    kStratified,
    kInverseUniform,
    kInverseSplit,
    kGradientParams,
};

double z_score(double estimate, double expected, double se) {
    const double diff = std::abs(estimate - expected);
    if (se > 0.0) return diff / se;
    return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

double relative_error(double value, double exact) {
    if (exact == 0.0) return std::abs(value);
    return std::abs(value - exact) / std::abs(exact);
}

double log_uniform(CounterRng& rng, double lo, double hi) {
    return std::exp(std::log(lo) + rng.uniform() * (std::log(hi) - std::log(lo)));
}

Vec3 random_direction(CounterRng& rng) {
    std::normal_distribution<double> normal;
    Vec3 d;
    do {
        d = Vec3(normal(rng), normal(rng), normal(rng));
    } while (d.norm() < 1e-3);
    return d.normalized() * (0.5 + 1.5 * rng.uniform());
}

Vec3 random_origin(CounterRng& rng) {
    return Vec3(2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0);
}

// A frustum with t_mu, t_delta / t_mu and radius / t_mu drawn log-uniformly from the given ranges.
ConicalFrustum random_frustum(CounterRng& rng, double mu_lo, double mu_hi, double delta_lo, double delta_hi,
                              double radius_lo, double radius_hi) {
    ConicalFrustum f;
    f.ray.origin = random_origin(rng);
    f.ray.direction = random_direction(rng);
    const double mu = log_uniform(rng, mu_lo, mu_hi);
    const double delta = mu * log_uniform(rng, delta_lo, delta_hi);
    f.ray.radius = mu * log_uniform(rng, radius_lo, radius_hi);
    f.t0 = std::max(0.0, mu - delta);
    f.t1 = mu + delta;
    return f;
}

// The closed-form t variance with the sign of its correction term flipped.
double mutated_var_t(double t0, double t1) {
    const double mid = 0.5 * (t0 + t1);
    const double half = 0.5 * (t1 - t0);
    const double mid2 = mid * mid;
    const double half2 = half * half;
    const double denom = 3.0 * mid2 + half2;
    return half2 / 3.0 + (4.0 / 15.0) * (half2 * half2 * (12.0 * mid2 - half2)) / (denom * denom);
}

struct Histogram3 {
    static constexpr int kT = 5, kR = 5, kTheta = 4;
    std::vector<double> counts = std::vector<double>(kT * kR * kTheta, 0.0);
};

// Equal-probability bin of a point under the uniform frustum distribution.
int frustum_bin(const ConicalFrustum& f, const Vec3& x) {
    const Vec3 c = cone_coordinates(f.ray, x);
    const double t = c[0];
    const double a = f.t0 * f.t0 * f.t0;
    const double b = f.t1 * f.t1 * f.t1;
    const double cdf_t = (t * t * t - a) / (b - a);
    const double rho = std::hypot(c[1], c[2]) / (f.ray.radius * t);
    const double theta = std::atan2(c[2], c[1]) + std::numbers::pi;
    const int it = std::clamp(static_cast<int>(cdf_t * Histogram3::kT), 0, Histogram3::kT - 1);
    const int ir = std::clamp(static_cast<int>(rho * rho * Histogram3::kR), 0, Histogram3::kR - 1);
    const int ia = std::clamp(static_cast<int>(theta / (2.0 * std::numbers::pi) * Histogram3::kTheta), 0,
                              Histogram3::kTheta - 1);
    return (it * Histogram3::kR + ir) * Histogram3::kTheta + ia;
}

ConicalFrustum sampler_frustum(const VerifyOptions& options) {
    CounterRng rng(options.seed, kSamplerParams);
    ConicalFrustum f;
    f.ray.origin = random_origin(rng);
    f.ray.direction = random_direction(rng);
    f.ray.radius = 0.15;
    f.t0 = 1.0;
    f.t1 = 2.5;
    return f;
}

std::vector<double> frustum_histogram(const ConicalFrustum& f, const std::vector<Vec3>& points) {
    Histogram3 h;
    for (const Vec3& x : points) h.counts[frustum_bin(f, x)] += 1.0;
    return h.counts;
}

std::size_t sampler_count(const VerifyOptions& options) { return options.samples(100000); }

}  // namespace

std::string to_string(Comparison c) { return c == Comparison::AtMost ? "<=" : ">="; }

CheckResult make_check(std::string name, double statistic, double tolerance, Comparison comparison) {
    CheckResult r;
    r.name = std::move(name);
    r.statistic = statistic;
    r.tolerance = tolerance;
    r.comparison = comparison;
    r.pass = comparison == Comparison::AtMost ? statistic <= tolerance : statistic >= tolerance;
    return r;
}

std::size_t VerifyOptions::samples(std::size_t nominal) const {
    if (!(sample_scale > 0.0)) throw std::invalid_argument("sample_scale must be positive");
    return std::max<std::size_t>(1000, static_cast<std::size_t>(std::llround(nominal * sample_scale)));
}

CheckResult check_frustum_moments_mc(const VerifyOptions& options, int frustums) {
    const std::size_t n = options.samples(1000000);
    double worst = 0.0;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (int k = 0; k < frustums; ++k) {
        CounterRng params(options.seed, kFrustumParams, k);
        const ConicalFrustum f = random_frustum(params, 0.1, 100.0, 1e-3, 1.0, 1e-3, 0.2);
        Vec3 u, v;
        orthonormal_basis(f.ray.direction, u, v);
        const McMoments mc = mc_moments(n, 3, [&](std::size_t i, std::span<double> out) {
            CounterRng rng(options.seed, kFrustumSamples + (static_cast<std::uint64_t>(k) << 16), i);
            const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
            const Vec3 c = cone_coordinates(f.ray, frustum_point(f, u, v, u1, u2, u3));
            out[0] = c[0];
            out[1] = c[1];
            out[2] = c[2];
        });
        FrustumMoments m = frustum_moments_stable(f.t0, f.t1);
        if (options.mutate_var_t) m.var_t = mutated_var_t(f.t0, f.t1);
        const double var_r = m.var_r * f.ray.radius * f.ray.radius;
        const double z_mean_t = z_score(mc.mean[0], m.mean_t, mc.mean_se[0]);
        const double z_var_t = z_score(mc.variance[0], m.var_t, mc.variance_se[0]);
        const double z_var_r = std::max(z_score(mc.variance[1], var_r, mc.variance_se[1]),
                                        z_score(mc.variance[2], var_r, mc.variance_se[2]));
        const double z_center = std::max(z_score(mc.mean[1], 0.0, mc.mean_se[1]), z_score(mc.mean[2], 0.0, mc.mean_se[2]));
        const double z = std::max({z_mean_t, z_var_t, z_var_r, z_center});
        worst = std::max(worst, z);
        rows.push_back({{"t0", f.t0}, {"t1", f.t1}, {"radius", f.ray.radius}, {"z_mean_t", z_mean_t},
                        {"z_var_t", z_var_t}, {"z_var_r", z_var_r}, {"z_center", z_center}});
    }
    CheckResult r = make_check("frustum_moments_mc", worst, 5.0);
    r.details = {{"frustums", frustums}, {"samples", n}, {"rows", rows}};
    return r;
}

CheckResult check_frustum_gaussian_lift_mc(const VerifyOptions& options, int frustums) {
    const std::size_t n = options.samples(1000000);
    double worst = 0.0;
    for (int k = 0; k < frustums; ++k) {
        CounterRng params(options.seed, kLiftParams, k);
        const ConicalFrustum f = random_frustum(params, 0.5, 10.0, 1e-2, 0.5, 1e-2, 0.2);
        const GaussianRegion g = frustum_to_gaussian(f);
        Vec3 u, v;
        orthonormal_basis(f.ray.direction, u, v);
        const McMoments mc = mc_moments(n, 3, [&](std::size_t i, std::span<double> out) {
            CounterRng rng(options.seed, kLiftSamples + (static_cast<std::uint64_t>(k) << 16), i);
            const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
            const Vec3 x = frustum_point(f, u, v, u1, u2, u3);
            out[0] = x[0];
            out[1] = x[1];
            out[2] = x[2];
        });
        for (int i = 0; i < 3; ++i) {
            worst = std::max(worst, z_score(mc.mean[i], g.mean[i], mc.mean_se[i]));
            worst = std::max(worst, z_score(mc.variance[i], g.cov_diag[i], mc.variance_se[i]));
        }
    }
    CheckResult r = make_check("frustum_gaussian_lift_mc", worst, 5.0);
    r.details = {{"frustums", frustums}, {"samples", n}};
    return r;
}

CheckResult check_moments_exact_rational() {
    const FrustumMoments m = frustum_moments_stable(1.0, 2.0);
    const double mean_t = 45.0 / 28.0;
    const double var_t = 93.0 / 35.0 - mean_t * mean_t;
    const double var_r = 93.0 / 140.0;
    const bool finite = std::isfinite(m.mean_t) && std::isfinite(m.var_t) && std::isfinite(m.var_r);
    const double err = finite ? std::max({relative_error(m.mean_t, mean_t), relative_error(m.var_t, var_t),
                                          relative_error(m.var_r, var_r)})
                              : std::numeric_limits<double>::infinity();
    CheckResult r = make_check("moments_exact_rational", err, 1e-9);
    r.details = {{"mean_t", m.mean_t}, {"var_t", m.var_t}, {"var_r", m.var_r}};
    return r;
}

CheckResult check_moments_thin_interval_finite() {
    int bad = 0;
    int naive_bad = 0;
    double worst_rel = 0.0;
    for (double mu : {1e-3, 0.1, 1.0, 2.0, 37.0, 1e3, 1e6}) {
        const double t0 = mu * (1.0 - 1e-12);
        const double t1 = mu * (1.0 + 1e-12);
        const double delta = 0.5 * (t1 - t0);  // exact width of the rounded interval
        const FrustumMoments m = frustum_moments_stable(t0, t1);
        if (!std::isfinite(m.mean_t) || !std::isfinite(m.var_t) || !std::isfinite(m.var_r) || m.var_t < 0.0) ++bad;
        // Leading-order values for a vanishing interval.
        worst_rel = std::max({worst_rel, relative_error(m.mean_t, 0.5 * (t0 + t1)), relative_error(m.var_t, delta * delta / 3.0),
                              relative_error(m.var_r, mu * mu / 4.0)});
        const FrustumMoments naive = frustum_moments_naive(t0, t1);
        if (!std::isfinite(naive.var_t) || naive.var_t <= 0.0 || relative_error(naive.var_t, delta * delta / 3.0) > 1e-3)
            ++naive_bad;
    }
    CheckResult r = make_check("moments_thin_interval_finite", bad, 0.0);
    if (worst_rel > 1e-6) r.pass = false;
    r.details = {{"nonfinite_or_negative", bad}, {"max_relative_error_vs_limit", worst_rel},
                 {"naive_failures", naive_bad}};
    return r;
}

CheckResult check_moments_stable_vs_naive(const VerifyOptions& options) {
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        CounterRng rng(options.seed, kNaiveParams, k);
        const double mu = log_uniform(rng, 0.1, 100.0);
        const double delta = mu * log_uniform(rng, 0.01, 1.0);
        const double t0 = std::max(0.0, mu - delta);
        const double t1 = mu + delta;
        const FrustumMoments s = frustum_moments_stable(t0, t1);
        const FrustumMoments n = frustum_moments_naive(t0, t1);
        worst = std::max({worst, relative_error(n.mean_t, s.mean_t), relative_error(n.var_t, s.var_t),
                          relative_error(n.var_r, s.var_r)});
    }
    return make_check("moments_stable_vs_naive", worst, 1e-9);
}

CheckResult check_cov_diag_matches_full(const VerifyOptions& options) {
    double worst = 0.0;
    double worst_sym = 0.0;
    for (int k = 0; k < 200; ++k) {
        CounterRng rng(options.seed, kCovParams, k);
        const ConicalFrustum f = random_frustum(rng, 0.1, 100.0, 1e-3, 1.0, 1e-3, 0.2);
        const GaussianRegion g = frustum_to_gaussian(f, true);
        const double scale = std::max(1.0, g.cov->cwiseAbs().maxCoeff());
        worst = std::max(worst, (g.cov->diagonal() - g.cov_diag).cwiseAbs().maxCoeff() / scale);
        worst_sym = std::max(worst_sym, (*g.cov - g.cov->transpose()).cwiseAbs().maxCoeff() / scale);
    }
    CheckResult r = make_check("cov_diag_matches_full", std::max(worst, worst_sym), 1e-12);
    r.details = {{"diag_error", worst}, {"asymmetry", worst_sym}};
    return r;
}

CheckResult check_cylinder_moments_mc(const VerifyOptions& options, int cylinders) {
    const std::size_t n = options.samples(1000000);
    double worst = 0.0;
    for (int k = 0; k < cylinders; ++k) {
        CounterRng params(options.seed, kCylinderParams, k);
        Ray axis;
        axis.origin = random_origin(params);
        axis.direction = random_direction(params);
        axis.radius = 1.0;
        const double t0 = 10.0 * params.uniform();
        const double t1 = t0 + log_uniform(params, 1e-3, 5.0);
        const double radius = log_uniform(params, 1e-3, 2.0);
        Vec3 u, v;
        orthonormal_basis(axis.direction, u, v);
        const McMoments mc = mc_moments(n, 3, [&](std::size_t i, std::span<double> out) {
            CounterRng rng(options.seed, kCylinderSamples + (static_cast<std::uint64_t>(k) << 16), i);
            const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
            const Vec3 c = cone_coordinates(axis, cylinder_point(axis, u, v, radius, t0, t1, u1, u2, u3));
            out[0] = c[0];
            out[1] = c[1];
            out[2] = c[2];
        });
        const FrustumMoments m = cylinder_moments(radius, t0, t1);
        worst = std::max({worst, z_score(mc.mean[0], m.mean_t, mc.mean_se[0]),
                          z_score(mc.variance[0], m.var_t, mc.variance_se[0]),
                          z_score(mc.variance[1], m.var_r, mc.variance_se[1]),
                          z_score(mc.variance[2], m.var_r, mc.variance_se[2])});
    }
    CheckResult r = make_check("cylinder_moments_mc", worst, 5.0);
    r.details = {{"cylinders", cylinders}, {"samples", n}};
    return r;
}

CheckResult check_frustum_sampler_gof(const VerifyOptions& options, bool rejection) {
    const ConicalFrustum f = sampler_frustum(options);
    const std::size_t n = sampler_count(options);
    CounterRng rng(options.seed, rejection ? kSamplerRejection : kSamplerInverse);
    const auto points = rejection ? sample_frustum_rejection(f, n, rng) : sample_frustum_uniform(f, n, rng);
    int outside = 0;
    for (const Vec3& x : points)
        if (!frustum_contains(f, x)) ++outside;
    const auto observed = frustum_histogram(f, points);
    const std::vector<double> expected(observed.size(), static_cast<double>(n) / observed.size());
    const ChiSquaredResult chi = chi_squared_goodness(observed, expected);
    CheckResult r = make_check(rejection ? "frustum_sampler_rejection_chi2" : "frustum_sampler_inverse_cdf_chi2",
                               chi.p_value, 1e-3, Comparison::AtLeast);
    if (outside > 0) r.pass = false;
    r.details = {{"samples", n}, {"chi2", chi.statistic}, {"dof", chi.dof}, {"outside", outside}};
    return r;
}

CheckResult check_frustum_sampler_homogeneity(const VerifyOptions& options) {
    const ConicalFrustum f = sampler_frustum(options);
    const std::size_t n = sampler_count(options);
    CounterRng a_rng(options.seed, kSamplerInverse, 1);
    CounterRng b_rng(options.seed, kSamplerRejection, 1);
    const auto a = frustum_histogram(f, sample_frustum_uniform(f, n, a_rng));
    const auto b = frustum_histogram(f, sample_frustum_rejection(f, n, b_rng));
    const ChiSquaredResult chi = chi_squared_homogeneity(a, b);
    CheckResult r = make_check("frustum_sampler_homogeneity_chi2", chi.p_value, 1e-3, Comparison::AtLeast);
    r.details = {{"samples", n}, {"chi2", chi.statistic}, {"dof", chi.dof}};
    return r;
}

CheckResult check_expected_trig_mc(const VerifyOptions& options) {
    const std::size_t n = options.samples(1000000);
    const double mus[] = {-2.7, 0.0, 0.9, std::numbers::pi / 2.0, 4.1};
    const double vars[] = {0.05, 0.6, 2.0 * std::numbers::ln2, 3.5};
    double worst = 0.0;
    int point = 0;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (double mu : mus) {
        for (double var : vars) {
            const double sd = std::sqrt(var);
            const int index = point++;
            const McEstimate mc = mc_expectation(n, 2, [&](std::size_t i, std::span<double> out) {
                CounterRng rng(options.seed, kTrigSamples + (static_cast<std::uint64_t>(index) << 16), i);
                std::normal_distribution<double> normal(mu, sd);
                const double x = normal(rng);
                out[0] = std::sin(x);
                out[1] = std::cos(x);
            });
            const auto [es, ec] = expected_trig(mu, var);
            const double z = std::max(z_score(mc.mean[0], es, mc.standard_error[0]),
                                      z_score(mc.mean[1], ec, mc.standard_error[1]));
            worst = std::max(worst, z);
            rows.push_back({{"mu", mu}, {"var", var}, {"e_sin", es}, {"e_cos", ec}, {"z", z}});
        }
    }
    CheckResult r = make_check("expected_trig_mc", worst, 5.0);
    r.details = {{"points", point}, {"samples", n}, {"rows", rows}};
    return r;
}

CheckResult check_ipe_mc(const VerifyOptions& options, int regions, int degree) {
    const std::size_t n = options.samples(1000000);
    const int dims = encoded_size(3, degree);
    double worst = 0.0;
    for (int k = 0; k < regions; ++k) {
        CounterRng params(options.seed, kIpeParams, k);
        std::normal_distribution<double> normal;
        Mat3 a;
        for (int i = 0; i < 9; ++i) a.data()[i] = normal(params);
        const double scale = log_uniform(params, 1e-4, 0.1);
        const Mat3 cov = scale * (a * a.transpose() / 3.0 + 0.05 * Mat3::Identity());
        const Mat3 chol = cov.llt().matrixL();
        GaussianRegion g;
        g.mean = Vec3(4.0 * params.uniform() - 2.0, 4.0 * params.uniform() - 2.0, 4.0 * params.uniform() - 2.0);
        g.cov_diag = cov.diagonal();
        const auto ipe = integrated_positional_encode(g, degree);
        const McEstimate mc = mc_expectation(n, dims, [&](std::size_t i, std::span<double> out) {
            CounterRng rng(options.seed, kIpeSamples + (static_cast<std::uint64_t>(k) << 16), i);
            std::normal_distribution<double> z;
            const Vec3 e(z(rng), z(rng), z(rng));
            const Vec3 x = g.mean + chol * e;
            positional_encode(std::span<const double>(x.data(), 3), degree, out);
        });
        for (int d = 0; d < dims; ++d) worst = std::max(worst, z_score(mc.mean[d], ipe[d], mc.standard_error[d]));
    }
    CheckResult r = make_check("ipe_mc", worst, 5.0);
    r.details = {{"regions", regions}, {"degree", degree}, {"samples", n}};
    return r;
}

CheckResult check_ipe_zero_cov_is_pe(const VerifyOptions& options) {
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        CounterRng rng(options.seed, kPeParams, k);
        GaussianRegion g;
        g.mean = Vec3(20.0 * rng.uniform() - 10.0, 20.0 * rng.uniform() - 10.0, 20.0 * rng.uniform() - 10.0);
        const auto ipe = integrated_positional_encode(g, 16);
        const auto pe = positional_encode(g.mean, 16);
        for (std::size_t i = 0; i < pe.size(); ++i) worst = std::max(worst, std::abs(ipe[i] - pe[i]));
    }
    return make_check("ipe_zero_cov_is_pe", worst, 1e-12);
}

CheckResult check_frustum_ipe_approximation(const VerifyOptions& options, int frustums) {
    const std::size_t n = options.samples(1000000);
    constexpr int kDegree = 4;
    const int dims = encoded_size(3, kDegree);
    constexpr double kAssertedRadius = 0.05;
    const double radii[] = {1e-3, 5e-3, 0.02, 0.05, 0.1, 0.2};
    double worst_asserted = 0.0;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (int k = 0; k < frustums; ++k) {
        CounterRng params(options.seed, kApproxParams, k);
        ConicalFrustum f;
        f.ray.origin = random_origin(params);
        f.ray.direction = random_direction(params);
        const double mu = 0.5 + 0.5 * params.uniform();
        const double ratio = radii[k % std::size(radii)];
        const double delta = 0.02 * mu * params.uniform() + 1e-3;
        f.ray.radius = ratio * mu;
        f.t0 = mu - delta;
        f.t1 = mu + delta;
        const auto ipe = integrated_positional_encode(frustum_to_gaussian(f), kDegree);
        Vec3 u, v;
        orthonormal_basis(f.ray.direction, u, v);
        const McEstimate mc = mc_expectation(n, dims, [&](std::size_t i, std::span<double> out) {
            CounterRng rng(options.seed, kApproxSamples + (static_cast<std::uint64_t>(k) << 16), i);
            const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
            const Vec3 x = frustum_point(f, u, v, u1, u2, u3);
            positional_encode(std::span<const double>(x.data(), 3), kDegree, out);
        });
        double z = 0.0;
        double abs_err = 0.0;
        for (int d = 0; d < dims; ++d) {
            z = std::max(z, z_score(mc.mean[d], ipe[d], mc.standard_error[d]));
            abs_err = std::max(abs_err, std::abs(mc.mean[d] - ipe[d]));
        }
        const bool asserted = ratio <= kAssertedRadius;
        if (asserted) worst_asserted = std::max(worst_asserted, z);
        rows.push_back({{"radius_over_t_mu", ratio}, {"t0", f.t0}, {"t1", f.t1}, {"max_z", z},
                        {"max_abs_error", abs_err}, {"asserted", asserted}});
    }
    CheckResult r = make_check("frustum_ipe_gaussian_approximation", worst_asserted, 10.0);
    r.details = {{"degree", kDegree}, {"samples", n}, {"rows", rows}};
    return r;
}

CheckResult check_composite_two_interval() {
    const double tau[] = {1.0, 2.0};
    const Vec3 rgb[] = {Vec3(1, 0, 0), Vec3(0, 1, 0)};
    const double t[] = {0.0, 0.5, 1.0};
    const Composite c = composite(tau, rgb, t);
    const double w0 = 1.0 - std::exp(-0.5);
    const double w1 = std::exp(-0.5) * (1.0 - std::exp(-1.0));
    const double err = std::max({std::abs(c.weights[0] - w0), std::abs(c.weights[1] - w1),
                                 std::abs(c.transmittance[0] - 1.0), std::abs(c.transmittance[1] - std::exp(-0.5)),
                                 (c.color - Vec3(w0, w1, 0.0)).cwiseAbs().maxCoeff()});
    return make_check("composite_two_interval_closed_form", err, 1e-12);
}

CheckResult check_composite_two_interval_integral() {
    const double tau[] = {1.0, 2.0};
    const Vec3 rgb[] = {Vec3(1, 0, 0), Vec3(0, 1, 0)};
    const double t[] = {0.0, 0.5, 1.0};
    const Composite c = composite(tau, rgb, t);
    const auto sigma = [](double s) { return s < 0.5 ? 1.0 : 2.0; };
    double err = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        const double integral =
            integrate_volume(sigma, [&](double s) { return rgb[s < 0.5 ? 0 : 1][ch]; }, 0.0, 1.0, 10000);
        err = std::max(err, std::abs(integral - c.color[ch]));
    }
    return make_check("composite_two_interval_fine_integral", err, 1e-3);
}

CheckResult check_composite_fine_grid(const VerifyOptions& options, int profiles, int intervals, int steps) {
    constexpr double kNear = 2.0, kFar = 6.0;
    double worst = 0.0;
    for (int k = 0; k < profiles; ++k) {
        CounterRng rng(options.seed, kProfileParams, k);
        const double base = 0.3 * rng.uniform();
        double amp[3], center[3], width[3], freq[3], phase[3];
        for (int m = 0; m < 3; ++m) {
            amp[m] = 5.0 * rng.uniform();
            center[m] = kNear + (kFar - kNear) * rng.uniform();
            width[m] = 0.1 + 0.4 * rng.uniform();
            freq[m] = 0.5 + 2.5 * rng.uniform();
            phase[m] = 2.0 * std::numbers::pi * rng.uniform();
        }
        const auto sigma = [&](double s) {
            double v = base;
            for (int m = 0; m < 3; ++m) v += amp[m] * std::exp(-0.5 * std::pow((s - center[m]) / width[m], 2));
            return v;
        };
        const auto color = [&](int ch, double s) { return 0.5 + 0.5 * std::sin(freq[ch] * s + phase[ch]); };

        std::vector<double> t(intervals + 1), tau(intervals);
        std::vector<Vec3> rgb(intervals);
        for (int i = 0; i <= intervals; ++i) t[i] = kNear + (kFar - kNear) * i / intervals;
        for (int i = 0; i < intervals; ++i) {
            const double mid = 0.5 * (t[i] + t[i + 1]);
            tau[i] = sigma(mid);
            rgb[i] = Vec3(color(0, mid), color(1, mid), color(2, mid));
        }
        const Composite c = composite(tau, rgb, t);
        for (int ch = 0; ch < 3; ++ch) {
            const double integral =
                integrate_volume(sigma, [&](double s) { return color(ch, s); }, kNear, kFar, steps);
            worst = std::max(worst, std::abs(integral - c.color[ch]));
        }
    }
    CheckResult r = make_check("composite_fine_grid", worst, 1e-3);
    r.details = {{"profiles", profiles}, {"intervals", intervals}, {"steps", steps}};
    return r;
}

CheckResult check_stratified_chi2(const VerifyOptions& options) {
    constexpr int kBins = 8, kSub = 10;
    constexpr double kNear = 2.0, kFar = 6.0;
    const std::size_t reps = options.samples(100000);
    std::vector<double> observed(kBins * kSub, 0.0);
    int misplaced = 0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        CounterRng rng(options.seed, kStratified, rep);
        const auto t = stratified_samples(kNear, kFar, kBins, &rng);
        for (int b = 0; b < kBins; ++b) {
            const double pos = (t[b] - kNear) / (kFar - kNear) * kBins - b;
            if (pos < 0.0 || pos >= 1.0) {
                ++misplaced;
                continue;
            }
            observed[b * kSub + static_cast<int>(pos * kSub)] += 1.0;
        }
    }
    const std::vector<double> expected(observed.size(), static_cast<double>(reps) / kSub);
    const ChiSquaredResult chi = chi_squared_goodness(observed, expected);
    CheckResult r = make_check("stratified_samples_chi2", chi.p_value, 1e-3, Comparison::AtLeast);
    if (misplaced > 0) r.pass = false;
    r.details = {{"draws_per_bin", reps}, {"chi2", chi.statistic}, {"dof", chi.dof}, {"misplaced", misplaced}};
    return r;
}

CheckResult check_inverse_transform_ks(const VerifyOptions& options) {
    constexpr int kIntervals = 10, kDraws = 100;
    const std::size_t reps = options.samples(100000) / kDraws;
    std::vector<double> edges(kIntervals + 1);
    for (int i = 0; i <= kIntervals; ++i) edges[i] = 2.0 + 4.0 * i / kIntervals;
    const std::vector<double> pdf(kIntervals, 1.0 / kIntervals);
    std::vector<double> samples;
    samples.reserve(reps * kDraws);
    for (std::size_t rep = 0; rep < reps; ++rep) {
        CounterRng rng(options.seed, kInverseUniform, rep);
        for (double t : inverse_transform_sample(pdf, edges, kDraws, &rng)) samples.push_back(t);
    }
    const double d = ks_statistic_uniform(samples, 2.0, 6.0);
    CheckResult r = make_check("inverse_transform_uniform_ks", ks_p_value(d, samples.size()), 1e-3,
                               Comparison::AtLeast);
    r.details = {{"samples", samples.size()}, {"ks_statistic", d}};
    return r;
}

CheckResult check_inverse_transform_split(const VerifyOptions& options) {
    const std::size_t reps = options.samples(100000) / 10;
    const double edges[] = {0.0, 1.0, 2.0};
    const double pdf[] = {0.25, 0.75};
    double first = 0.0;
    double total = 0.0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        CounterRng rng(options.seed, kInverseSplit, rep);
        for (double t : inverse_transform_sample(pdf, edges, 10, &rng)) {
            first += t < 1.0 ? 1.0 : 0.0;
            total += 1.0;
        }
    }
    const double z = std::abs(first - 0.25 * total) / std::sqrt(total * 0.25 * 0.75);
    CheckResult r = make_check("inverse_transform_split_binomial", z, 5.0);
    r.details = {{"samples", total}, {"first_interval_fraction", first / total}};
    return r;
}

CheckResult check_gradient_fd(const VerifyOptions& options, const GradientCheckOptions& gradient) {
    TrainConfig config;
    config.seed = options.seed;
    config.two_mlps = gradient.two_mlps;
    config.n_coarse = gradient.n_coarse;
    config.n_fine = gradient.n_fine;
    const EncodingConfig encoding = config.encoding_config();
    RenderConfig render = config.render_config(true);
    RadianceModel<double> model = RadianceModel<double>::create(
        encoding, layout_for(encoding, config.depth, config.width), config.two_mlps, options.seed);

    CounterRng rng(options.seed, kGradientParams);
    const Camera camera = default_rig().train[options.seed % 16];
    RayBatch batch;
    for (int p = 0; p < gradient.pixels; ++p) {
        const int row = static_cast<int>(rng() % camera.height);
        const int col = static_cast<int>(rng() % camera.width);
        batch.rays.push_back(pixel_cone(camera, row, col));
        batch.keys.push_back(pixel_key(options.seed, p));
        batch.targets.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
        batch.weights.push_back(static_cast<double>(kScaleFactors[p % 4] * kScaleFactors[p % 4]));
    }
    const double lambda = config.loss_lambda();

    std::vector<std::vector<double>> fine;
    const LossResult<double> analytic = batch_loss(model, batch, render, lambda, true, nullptr, &fine);

    // Flat view over the parameters of every MLP.
    std::vector<double> flat;
    std::vector<double> flat_grad;
    std::vector<std::pair<std::size_t, std::size_t>> owner;  // (mlp, local index)
    for (std::size_t m = 0; m < model.mlps.size(); ++m) {
        const auto p = model.mlps[m].parameters();
        for (std::size_t i = 0; i < p.size(); ++i) {
            flat.push_back(p[i]);
            flat_grad.push_back(analytic.grads[m][i]);
            owner.emplace_back(m, i);
        }
    }

    std::size_t slice_total = 0;
    for (const auto& mlp : model.mlps) slice_total += mlp.slices().size();
    const int per_slice = static_cast<int>((gradient.parameters + slice_total - 1) / slice_total);
    std::vector<std::size_t> indices;
    std::size_t base = 0;
    for (const auto& mlp : model.mlps) {
        for (const DenseSlice& s : mlp.slices()) {
            std::set<std::size_t> chosen;
            const int want = std::min<int>(per_slice, static_cast<int>(s.size()));
            // Always include some biases; they are few and easy to miss by chance.
            const int biases = std::min(want / 4, s.rows);
            while (static_cast<int>(chosen.size()) < biases) chosen.insert(s.bias_offset() + rng() % s.rows);
            while (static_cast<int>(chosen.size()) < want) chosen.insert(s.offset + rng() % s.size());
            for (std::size_t c : chosen) indices.push_back(base + c);
        }
        base += mlp.parameter_count();
    }

    RadianceModel<double> probe = model;
    const auto loss = [&](std::span<const double> params) {
        for (std::size_t i = 0; i < params.size(); ++i) probe.mlps[owner[i].first].parameters()[owner[i].second] = params[i];
        return batch_loss(probe, batch, render, lambda, false, &fine).loss;
    };
    // A central difference straddling a ReLU kink does not estimate the derivative
    // at the point. Such a step shows up as disagreement with the half step; those
    // indices are retried with a smaller step.
    std::vector<double> fd = finite_diff_gradient(loss, flat, indices, gradient.h);
    std::vector<double> steps(indices.size(), gradient.h);
    int retries = 0;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const std::size_t one[] = {indices[k]};
        for (int attempt = 0; attempt < 3; ++attempt) {
            const double half = finite_diff_gradient(loss, flat, one, 0.5 * steps[k]).front();
            if (std::abs(half - fd[k]) <= 0.1 * gradient.tolerance * std::max(1.0, std::abs(half))) break;
            ++retries;
            steps[k] *= 0.1;
            fd[k] = finite_diff_gradient(loss, flat, one, steps[k]).front();
        }
    }

    double worst = 0.0;
    double worst_strict = 0.0;
    double fd_scale = 0.0;
    for (double g : fd) fd_scale = std::max(fd_scale, std::abs(g));
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const double diff = std::abs(flat_grad[indices[k]] - fd[k]);
        worst = std::max(worst, diff / std::max(1.0, std::abs(fd[k])));
        worst_strict = std::max(worst_strict, diff / std::max(std::abs(fd[k]), 1e-3 * fd_scale));
    }
    CheckResult r = make_check(gradient.two_mlps ? "gradient_fd_two_mlps" : "gradient_fd", worst, gradient.tolerance);
    r.details = {{"parameters_checked", indices.size()},
                 {"parameter_count", flat.size()},
                 {"h", gradient.h},
                 {"kink_retries", retries},
                 {"min_h", *std::min_element(steps.begin(), steps.end())},
                 {"loss", analytic.loss},
                 {"max_abs_fd_gradient", fd_scale},
                 {"max_error_relative_to_gradient_scale", worst_strict}};
    return r;
}

const std::vector<RegisteredCheck>& registered_checks() {
    static const std::vector<RegisteredCheck> checks = {
        {"frustum_moments_mc", [](const VerifyOptions& o) { return check_frustum_moments_mc(o); }},
        {"frustum_gaussian_lift_mc", [](const VerifyOptions& o) { return check_frustum_gaussian_lift_mc(o); }},
        {"moments_exact_rational", [](const VerifyOptions&) { return check_moments_exact_rational(); }},
        {"moments_thin_interval_finite", [](const VerifyOptions&) { return check_moments_thin_interval_finite(); }},
        {"moments_stable_vs_naive", [](const VerifyOptions& o) { return check_moments_stable_vs_naive(o); }},
        {"cov_diag_matches_full", [](const VerifyOptions& o) { return check_cov_diag_matches_full(o); }},
        {"cylinder_moments_mc", [](const VerifyOptions& o) { return check_cylinder_moments_mc(o); }},
        {"frustum_sampler_inverse_cdf_chi2", [](const VerifyOptions& o) { return check_frustum_sampler_gof(o, false); }},
        {"frustum_sampler_rejection_chi2", [](const VerifyOptions& o) { return check_frustum_sampler_gof(o, true); }},
        {"frustum_sampler_homogeneity_chi2", [](const VerifyOptions& o) { return check_frustum_sampler_homogeneity(o); }},
        {"expected_trig_mc", [](const VerifyOptions& o) { return check_expected_trig_mc(o); }},
        {"ipe_mc", [](const VerifyOptions& o) { return check_ipe_mc(o); }},
        {"ipe_zero_cov_is_pe", [](const VerifyOptions& o) { return check_ipe_zero_cov_is_pe(o); }},
        {"frustum_ipe_gaussian_approximation", [](const VerifyOptions& o) { return check_frustum_ipe_approximation(o); }},
        {"composite_two_interval_closed_form", [](const VerifyOptions&) { return check_composite_two_interval(); }},
        {"composite_two_interval_fine_integral",
         [](const VerifyOptions&) { return check_composite_two_interval_integral(); }},
        {"composite_fine_grid", [](const VerifyOptions& o) { return check_composite_fine_grid(o); }},
        {"stratified_samples_chi2", [](const VerifyOptions& o) { return check_stratified_chi2(o); }},
        {"inverse_transform_uniform_ks", [](const VerifyOptions& o) { return check_inverse_transform_ks(o); }},
        {"inverse_transform_split_binomial", [](const VerifyOptions& o) { return check_inverse_transform_split(o); }},
        {"gradient_fd", [](const VerifyOptions& o) { return check_gradient_fd(o); }},
        {"gradient_fd_two_mlps",
         [](const VerifyOptions& o) {
             GradientCheckOptions g;
             g.two_mlps = true;
             return check_gradient_fd(o, g);
         }},
    };
    return checks;
}

std::vector<CheckResult> run_checks(const VerifyOptions& options,
                                    const std::function<void(const CheckResult&)>& on_result) {
    std::vector<CheckResult> results;
    for (const RegisteredCheck& check : registered_checks()) {
        results.push_back(check.run(options));
        if (on_result) on_result(results.back());
    }
    return results;
}

nlohmann::ordered_json verify_report(const VerifyOptions& options, const std::vector<CheckResult>& results) {
    nlohmann::ordered_json checks = nlohmann::ordered_json::array();
    bool all = true;
    for (const CheckResult& r : results) {
        all = all && r.pass;
        // JSON has no infinity; a diverged statistic is reported as null.
        nlohmann::ordered_json stat = std::isfinite(r.statistic) ? nlohmann::ordered_json(r.statistic) : nlohmann::ordered_json(nullptr);
        checks.push_back({{"name", r.name},
                          {"statistic", stat},
                          {"tolerance", r.tolerance},
                          {"comparison", to_string(r.comparison)},
                          {"pass", r.pass},
                          {"details", r.details}});
    }
    return {{"seed", options.seed},
            {"sample_scale", options.sample_scale},
            {"mutate_var_t", options.mutate_var_t},
            {"pass", all},
            {"checks", checks}};
}

}  // namespace mipnerf

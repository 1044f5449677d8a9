#include "mipnerf/oracle.hpp"

#include "mipnerf/parallel.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mipnerf {

namespace {

constexpr std::size_t kBlock = 4096;

// Pairwise sum of per-block partials, component by component.
std::vector<double> pairwise_reduce(std::vector<std::vector<double>> parts) {
    while (parts.size() > 1) {
        std::vector<std::vector<double>> next;
        next.reserve((parts.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < parts.size(); i += 2) {
            std::vector<double> s = parts[i];
            for (std::size_t k = 0; k < s.size(); ++k) s[k] += parts[i + 1][k];
            next.push_back(std::move(s));
        }
        if (parts.size() % 2) next.push_back(std::move(parts.back()));
        parts = std::move(next);
    }
    return parts.front();
}

// Power sums of (value - shift) for powers 1..max_power, laid out [power][dim].
std::vector<double> power_sums(std::size_t n, int dims, int max_power, std::span<const double> shift,
                               const SampleFunction& f) {
    if (n < 2) throw std::invalid_argument("Monte Carlo estimate needs at least 2 samples");
    if (dims < 1) throw std::invalid_argument("Monte Carlo estimate needs dims >= 1");
    const std::size_t blocks = (n + kBlock - 1) / kBlock;
    std::vector<std::vector<double>> parts(blocks);
    parallel_for(blocks, [&](std::size_t b) {
        std::vector<double> sums(static_cast<std::size_t>(max_power) * dims, 0.0);
        std::vector<double> value(dims);
        const std::size_t end = std::min(n, (b + 1) * kBlock);
        for (std::size_t i = b * kBlock; i < end; ++i) {
            f(i, value);
            for (int k = 0; k < dims; ++k) {
                const double x = value[k] - shift[k];
                double p = x;
                for (int q = 0; q < max_power; ++q, p *= x) sums[q * dims + k] += p;
            }
        }
        parts[b] = std::move(sums);
    });
    return pairwise_reduce(std::move(parts));
}

// First sample as shift keeps the raw power sums well conditioned.
std::vector<double> first_sample(int dims, const SampleFunction& f) {
    std::vector<double> v(dims);
    f(0, v);
    for (double x : v)
        if (!std::isfinite(x)) throw std::runtime_error("Monte Carlo sample is not finite");
    return v;
}

}  // namespace

McEstimate mc_expectation(std::size_t n, int dims, const SampleFunction& f) {
    const auto shift = first_sample(dims, f);
    const auto sums = power_sums(n, dims, 2, shift, f);
    McEstimate est;
    est.n_samples = n;
    est.mean.resize(dims);
    est.standard_error.resize(dims);
    const double nd = static_cast<double>(n);
    for (int k = 0; k < dims; ++k) {
        const double m1 = sums[k] / nd;
        const double m2 = sums[dims + k] / nd;
        const double var = std::max(0.0, m2 - m1 * m1) * nd / (nd - 1.0);
        est.mean[k] = shift[k] + m1;
        est.standard_error[k] = std::sqrt(var / nd);
    }
    return est;
}

McMoments mc_moments(std::size_t n, int dims, const SampleFunction& f) {
    const auto shift = first_sample(dims, f);
    const auto sums = power_sums(n, dims, 4, shift, f);
    McMoments est;
    est.n_samples = n;
    est.mean.resize(dims);
    est.mean_se.resize(dims);
    est.variance.resize(dims);
    est.variance_se.resize(dims);
    const double nd = static_cast<double>(n);
    for (int k = 0; k < dims; ++k) {
        const double r1 = sums[k] / nd;
        const double r2 = sums[dims + k] / nd;
        const double r3 = sums[2 * dims + k] / nd;
        const double r4 = sums[3 * dims + k] / nd;
        const double c2 = std::max(0.0, r2 - r1 * r1);
        const double c4 = r4 - 4.0 * r1 * r3 + 6.0 * r1 * r1 * r2 - 3.0 * r1 * r1 * r1 * r1;
        est.mean[k] = shift[k] + r1;
        est.mean_se[k] = std::sqrt(c2 / (nd - 1.0));
        est.variance[k] = c2 * nd / (nd - 1.0);
        est.variance_se[k] = std::sqrt(std::max(0.0, c4 - c2 * c2) / nd);
    }
    return est;
}

Vec3 frustum_point(const ConicalFrustum& f, const Vec3& u_basis, const Vec3& v_basis, double u1, double u2,
                   double u3) {
    const double a = f.t0 * f.t0 * f.t0;
    const double b = f.t1 * f.t1 * f.t1;
    const double t = std::cbrt(a + u1 * (b - a));
    const double r = f.ray.radius * t * std::sqrt(u2);
    const double theta = 2.0 * std::numbers::pi * u3;
    return f.ray.origin + t * f.ray.direction + r * (std::cos(theta) * u_basis + std::sin(theta) * v_basis);
}

std::vector<Vec3> sample_frustum_uniform(const ConicalFrustum& f, std::size_t n, CounterRng& rng) {
    f.validate();
    Vec3 u, v;
    orthonormal_basis(f.ray.direction, u, v);
    std::vector<Vec3> out(n);
    for (auto& x : out) {
        const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
        x = frustum_point(f, u, v, u1, u2, u3);
    }
    return out;
}

std::vector<Vec3> sample_frustum_rejection(const ConicalFrustum& f, std::size_t n, CounterRng& rng) {
    f.validate();
    Vec3 u, v;
    orthonormal_basis(f.ray.direction, u, v);
    const double r_max = f.ray.radius * f.t1;
    std::vector<Vec3> out;
    out.reserve(n);
    while (out.size() < n) {
        const double t = f.t0 + rng.uniform() * (f.t1 - f.t0);
        const double px = (2.0 * rng.uniform() - 1.0) * r_max;
        const double py = (2.0 * rng.uniform() - 1.0) * r_max;
        const Vec3 x = f.ray.origin + t * f.ray.direction + px * u + py * v;
        if (frustum_contains(f, x)) out.push_back(x);
    }
    return out;
}

std::vector<Vec3> sample_cylinder_uniform(const Ray& axis, double radius, double t0, double t1, std::size_t n,
                                          CounterRng& rng) {
    if (!(radius > 0.0) || !(t1 > t0)) throw std::invalid_argument("cylinder sampler needs radius > 0 and t0 < t1");
    Vec3 u, v;
    orthonormal_basis(axis.direction, u, v);
    std::vector<Vec3> out(n);
    for (auto& x : out) {
        const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
        x = cylinder_point(axis, u, v, radius, t0, t1, u1, u2, u3);
    }
    return out;
}

Vec3 cylinder_point(const Ray& axis, const Vec3& u_basis, const Vec3& v_basis, double radius, double t0, double t1,
                    double u1, double u2, double u3) {
    const double t = t0 + u1 * (t1 - t0);
    const double r = radius * std::sqrt(u2);
    const double theta = 2.0 * std::numbers::pi * u3;
    return axis.origin + t * axis.direction + r * (std::cos(theta) * u_basis + std::sin(theta) * v_basis);
}

Vec3 cone_coordinates(const Ray& ray, const Vec3& x) {
    Vec3 u, v;
    orthonormal_basis(ray.direction, u, v);
    const Vec3 offset = x - ray.origin;
    return {ray.direction.dot(offset) / ray.direction.squaredNorm(), u.dot(offset), v.dot(offset)};
}

std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)>& loss,
                                         std::span<const double> params, std::span<const std::size_t> indices,
                                         double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be positive");
    std::vector<double> p(params.begin(), params.end());
    std::vector<double> grad;
    grad.reserve(indices.size());
    for (std::size_t idx : indices) {
        if (idx >= p.size()) throw std::out_of_range("finite difference index " + std::to_string(idx));
        const double saved = p[idx];
        p[idx] = saved + h;
        const double plus = loss(p);
        p[idx] = saved - h;
        const double minus = loss(p);
        p[idx] = saved;
        if (!std::isfinite(plus) || !std::isfinite(minus))
            throw std::runtime_error("non-finite loss at parameter " + std::to_string(idx));
        grad.push_back((plus - minus) / (2.0 * h));
    }
    return grad;
}

double integrate_volume(const std::function<double(double)>& sigma, const std::function<double(double)>& color,
                        double t0, double t1, int steps) {
    if (!(t1 > t0) || steps < 1) throw std::invalid_argument("integrate_volume needs t0 < t1 and steps >= 1");
    const double dt = (t1 - t0) / steps;
    double depth = 0.0;  // optical depth up to the left edge of the current step
    double total = 0.0;
    for (int s = 0; s < steps; ++s) {
        const double a = t0 + s * dt;
        const double sa = sigma(a);
        const double sm = sigma(a + 0.5 * dt);
        const double sb = sigma(a + dt);
        // Optical depth at the midpoint and across the step by Simpson's rule.
        const double depth_mid = depth + dt / 24.0 * (5.0 * sa + 8.0 * sm - sb);
        total += std::exp(-depth_mid) * sm * color(a + 0.5 * dt) * dt;
        depth += dt / 6.0 * (sa + 4.0 * sm + sb);
    }
    return total;
}

namespace {

ChiSquaredResult finish_chi_squared(double statistic, int dof) {
    ChiSquaredResult r;
    r.statistic = statistic;
    r.dof = dof;
    if (dof < 1) throw std::invalid_argument("chi-squared test needs at least 2 populated bins");
    boost::math::chi_squared dist(dof);
    r.p_value = boost::math::cdf(boost::math::complement(dist, statistic));
    return r;
}

}  // namespace

ChiSquaredResult chi_squared_goodness(std::span<const double> observed, std::span<const double> expected) {
    if (observed.size() != expected.size()) throw std::invalid_argument("chi-squared: histogram sizes differ");
    double stat = 0.0;
    int bins = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (expected[i] <= 0.0) continue;
        const double diff = observed[i] - expected[i];
        stat += diff * diff / expected[i];
        ++bins;
    }
    return finish_chi_squared(stat, bins - 1);
}

ChiSquaredResult chi_squared_homogeneity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("chi-squared: histogram sizes differ");
    double na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i];
        nb += b[i];
    }
    if (!(na > 0.0) || !(nb > 0.0)) throw std::invalid_argument("chi-squared: empty sample");
    const double ka = std::sqrt(nb / na);
    const double kb = std::sqrt(na / nb);
    double stat = 0.0;
    int bins = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double total = a[i] + b[i];
        if (total <= 0.0) continue;
        const double diff = ka * a[i] - kb * b[i];
        stat += diff * diff / total;
        ++bins;
    }
    return finish_chi_squared(stat, bins - 1);
}

double ks_statistic_uniform(std::vector<double> samples, double lo, double hi) {
    if (samples.empty() || !(hi > lo)) throw std::invalid_argument("ks_statistic_uniform needs samples and lo < hi");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double cdf = std::clamp((samples[i] - lo) / (hi - lo), 0.0, 1.0);
        d = std::max({d, (i + 1) / n - cdf, cdf - i / n});
    }
    return d;
}

double ks_p_value(double statistic, std::size_t n) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * statistic;
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 ? 2.0 : -2.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

}  // namespace mipnerf

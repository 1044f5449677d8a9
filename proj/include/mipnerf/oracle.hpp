#pragma once

#include "mipnerf/geometry.hpp"
#include "mipnerf/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mipnerf {

struct McEstimate {
    std::vector<double> mean;
    std::vector<double> standard_error;
    std::size_t n_samples = 0;
};

/// Per-component sample mean and variance, each with its standard error. The
/// variance error uses the fourth central moment: se = sqrt((m4 - s^4) / n).
struct McMoments {
    std::vector<double> mean;
    std::vector<double> mean_se;
    std::vector<double> variance;
    std::vector<double> variance_se;
    std::size_t n_samples = 0;
};

/// Writes sample i's function values into `out`. Must be a pure function of i so
/// blocks can be evaluated in any order.
using SampleFunction = std::function<void(std::size_t i, std::span<double> out)>;

/// Mean and standard error over n samples. Sums are formed per fixed-size block
/// and reduced pairwise, so the result is independent of the thread count.
McEstimate mc_expectation(std::size_t n, int dims, const SampleFunction& f);
McMoments mc_moments(std::size_t n, int dims, const SampleFunction& f);

/// Exact uniform point in the frustum from three uniforms: t by the inverse CDF of
/// density t^2, radius by sqrt scaling, angle uniform.
Vec3 frustum_point(const ConicalFrustum& f, const Vec3& u_basis, const Vec3& v_basis, double u1, double u2,
                   double u3);

std::vector<Vec3> sample_frustum_uniform(const ConicalFrustum& f, std::size_t n, CounterRng& rng);

/// Uniform points in the bounding cylinder (radius = radius * t1) kept when
/// frustum_contains accepts them.
std::vector<Vec3> sample_frustum_rejection(const ConicalFrustum& f, std::size_t n, CounterRng& rng);

/// Uniform point in the solid cylinder of world radius `radius` around the ray
/// between parameters t0 and t1.
Vec3 cylinder_point(const Ray& axis, const Vec3& u_basis, const Vec3& v_basis, double radius, double t0, double t1,
                    double u1, double u2, double u3);

std::vector<Vec3> sample_cylinder_uniform(const Ray& axis, double radius, double t0, double t1, std::size_t n,
                                          CounterRng& rng);

/// Axial parameter t and the two perpendicular world offsets of x in the ray's frame.
Vec3 cone_coordinates(const Ray& ray, const Vec3& x);

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for each requested index.
/// Throws std::runtime_error if the loss is not finite.
std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)>& loss,
                                         std::span<const double> params, std::span<const std::size_t> indices,
                                         double h);

/// Continuous volume rendering of one color channel over [t0, t1] with `steps`
/// midpoint steps: C = int T(t) sigma(t) c(t) dt, T(t) = exp(-int_t0^t sigma).
double integrate_volume(const std::function<double(double)>& sigma, const std::function<double(double)>& color,
                        double t0, double t1, int steps);

struct ChiSquaredResult {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

/// Goodness of fit of observed counts to expected counts (bins with expectation 0 skipped).
ChiSquaredResult chi_squared_goodness(std::span<const double> observed, std::span<const double> expected);

/// Two-sample homogeneity test on paired histograms; empty bins are skipped.
ChiSquaredResult chi_squared_homogeneity(std::span<const double> a, std::span<const double> b);

/// Kolmogorov-Smirnov statistic of samples against U(lo, hi), and its asymptotic p-value.
double ks_statistic_uniform(std::vector<double> samples, double lo, double hi);
double ks_p_value(double statistic, std::size_t n);

}  // namespace mipnerf

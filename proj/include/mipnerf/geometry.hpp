#pragma once

#include <Eigen/Core>
#include <optional>

namespace mipnerf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// A cone r(t) = o + t d. The direction is NOT normalized: t is measured in units
/// of |d|, and `radius` is the cone radius at the plane o + d, so the cone radius
/// at parameter t is radius * t.
struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ();
    double radius = 0.0;

    /// Throws std::invalid_argument unless |d| > 0 and radius > 0.
    void validate() const;
};

struct ConicalFrustum {
    Ray ray;
    double t0 = 0.0;
    double t1 = 1.0;

    /// Throws std::invalid_argument unless 0 <= t0 < t1 and the ray is valid.
    void validate() const;
};

/// Moments of the uniform distribution over a frustum, in the frame of the cone:
/// mean and variance of t, and the variance along any one axis perpendicular to d.
struct FrustumMoments {
    double mean_t = 0.0;
    double var_t = 0.0;
    double var_r = 0.0;
};

/// World-space Gaussian approximating a frustum. `cov` is only filled when a
/// caller asks for the full matrix (concatenated encoding); its diagonal then
/// equals cov_diag.
struct GaussianRegion {
    Vec3 mean = Vec3::Zero();
    Vec3 cov_diag = Vec3::Zero();
    std::optional<Mat3> cov;
};

bool frustum_contains(const ConicalFrustum& f, const Vec3& x);

/// Moments for a unit-radius cone from the midpoint / half-width parameterization.
/// var_r must be scaled by radius^2 at the call site. Finite for arbitrarily thin
/// intervals. Throws std::invalid_argument unless 0 <= t0 < t1.
FrustumMoments frustum_moments_stable(double t0, double t1);

/// Same quantities from ratios of power differences t1^n - t0^n. Loses precision
/// (and can return garbage) when t1 - t0 is tiny relative to t0; kept as a
/// cross-check of the stable form.
FrustumMoments frustum_moments_naive(double t0, double t1);

/// Moments of a uniform solid cylinder of the given radius between t0 and t1.
/// var_r is absolute (not per unit radius).
FrustumMoments cylinder_moments(double radius, double t0, double t1);

/// Lifts cone-frame moments into world space. `radial_scale2` multiplies
/// moments.var_r (radius^2 for cones, 1 for cylinder moments).
GaussianRegion lift_moments(const Ray& ray, const FrustumMoments& moments, double radial_scale2,
                            bool full_covariance = false);

GaussianRegion frustum_to_gaussian(const ConicalFrustum& f, bool full_covariance = false);

/// Orthonormal vectors spanning the plane perpendicular to `axis` (which need not be unit).
void orthonormal_basis(const Vec3& axis, Vec3& u, Vec3& v);

}  // namespace mipnerf

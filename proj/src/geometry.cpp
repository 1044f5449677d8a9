#include "mipnerf/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mipnerf {

void Ray::validate() const {
    if (!direction.allFinite() || !origin.allFinite())
        throw std::invalid_argument("ray has non-finite origin or direction");
    if (!(direction.squaredNorm() > 0.0))
        throw std::invalid_argument("ray direction must be nonzero");
    if (!(radius > 0.0) || !std::isfinite(radius))
        throw std::invalid_argument("ray radius must be positive, got " + std::to_string(radius));
}

void ConicalFrustum::validate() const {
    ray.validate();
    if (!(t0 >= 0.0) || !(t1 > t0) || !std::isfinite(t1))
        throw std::invalid_argument("frustum needs 0 <= t0 < t1, got t0=" + std::to_string(t0) +
                                    " t1=" + std::to_string(t1));
}

bool frustum_contains(const ConicalFrustum& f, const Vec3& x) {
    const Vec3& d = f.ray.direction;
    const Vec3 offset = x - f.ray.origin;
    const double d_norm2 = d.squaredNorm();
    const double d_norm = std::sqrt(d_norm2);
    const double along = d.dot(offset);

    const double t_axial = along / d_norm2;
    if (!(f.t0 < t_axial && t_axial < f.t1)) return false;

    const double offset_norm = offset.norm();
    if (offset_norm == 0.0) return false;
    const double cos_angle = along / (d_norm * offset_norm);
    const double slope = f.ray.radius / d_norm;
    return cos_angle > 1.0 / std::sqrt(1.0 + slope * slope);
}

namespace {

void check_interval(double t0, double t1) {
    if (!(t0 >= 0.0) || !(t1 > t0) || !std::isfinite(t1))
        throw std::invalid_argument("interval needs 0 <= t0 < t1, got t0=" + std::to_string(t0) +
                                    " t1=" + std::to_string(t1));
}

}  // namespace

FrustumMoments frustum_moments_stable(double t0, double t1) {
    check_interval(t0, t1);
    const double mid = 0.5 * (t0 + t1);
    const double half = 0.5 * (t1 - t0);
    const double mid2 = mid * mid;
    const double half2 = half * half;
    const double half4 = half2 * half2;
    const double denom = 3.0 * mid2 + half2;

    FrustumMoments m;
    m.mean_t = mid + (2.0 * mid * half2) / denom;
    m.var_t = half2 / 3.0 - (4.0 / 15.0) * (half4 * (12.0 * mid2 - half2)) / (denom * denom);
    m.var_r = mid2 / 4.0 + (5.0 / 12.0) * half2 - (4.0 / 15.0) * half4 / denom;
    return m;
}

FrustumMoments frustum_moments_naive(double t0, double t1) {
    check_interval(t0, t1);
    const double p3 = std::pow(t1, 3) - std::pow(t0, 3);
    const double p4 = std::pow(t1, 4) - std::pow(t0, 4);
    const double p5 = std::pow(t1, 5) - std::pow(t0, 5);

    FrustumMoments m;
    m.mean_t = 3.0 * p4 / (4.0 * p3);
    const double second = 3.0 * p5 / (5.0 * p3);
    m.var_t = second - m.mean_t * m.mean_t;
    m.var_r = 3.0 * p5 / (20.0 * p3);
    return m;
}

FrustumMoments cylinder_moments(double radius, double t0, double t1) {
    if (!(radius > 0.0) || !std::isfinite(radius))
        throw std::invalid_argument("cylinder radius must be positive");
    if (!(t1 > t0) || !std::isfinite(t0) || !std::isfinite(t1))
        throw std::invalid_argument("cylinder needs t0 < t1");
    const double half = 0.5 * (t1 - t0);
    FrustumMoments m;
    m.mean_t = 0.5 * (t0 + t1);
    m.var_t = half * half / 3.0;
    m.var_r = radius * radius / 4.0;
    return m;
}

GaussianRegion lift_moments(const Ray& ray, const FrustumMoments& moments, double radial_scale2,
                            bool full_covariance) {
    const Vec3& d = ray.direction;
    const double var_r = moments.var_r * radial_scale2;
    const Vec3 d2 = d.cwiseProduct(d);
    const double d_norm2 = d.squaredNorm();

    GaussianRegion g;
    g.mean = ray.origin + moments.mean_t * d;
    g.cov_diag = moments.var_t * d2 + var_r * (Vec3::Ones() - d2 / d_norm2);
    if (full_covariance) {
        const Mat3 outer = d * d.transpose();
        g.cov = moments.var_t * outer + var_r * (Mat3::Identity() - outer / d_norm2);
    }
    return g;
}

GaussianRegion frustum_to_gaussian(const ConicalFrustum& f, bool full_covariance) {
    f.validate();
    const FrustumMoments m = frustum_moments_stable(f.t0, f.t1);
    return lift_moments(f.ray, m, f.ray.radius * f.ray.radius, full_covariance);
}

void orthonormal_basis(const Vec3& axis, Vec3& u, Vec3& v) {
    const Vec3 n = axis.normalized();
    // Duff et al., "Building an Orthonormal Basis, Revisited".
    const double sign = std::copysign(1.0, n.z());
    const double a = -1.0 / (sign + n.z());
    const double b = n.x() * n.y() * a;
    u = Vec3(1.0 + sign * n.x() * n.x() * a, sign * b, -sign * n.x());
    v = Vec3(b, sign + n.y() * n.y() * a, -n.y());
}

}  // namespace mipnerf

#include "mipnerf/camera.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mipnerf {

void Camera::validate() const {
    if (!(focal > 0.0) || !std::isfinite(focal)) throw std::invalid_argument("camera focal must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera dimensions must be positive");
    if (!(near < far) || near < 0.0) throw std::invalid_argument("camera needs 0 <= near < far");
}

Camera Camera::downscaled(int factor) const {
    if (factor < 1 || width % factor != 0 || height % factor != 0)
        throw std::invalid_argument("camera " + std::to_string(width) + "x" + std::to_string(height) +
                                    " not divisible by factor " + std::to_string(factor));
    Camera c = *this;
    c.width = width / factor;
    c.height = height / factor;
    c.focal = focal / factor;
    return c;
}

Ray pixel_cone(const Camera& camera, int row, int col, double sub_x, double sub_y, double radius_scale) {
    if (row < 0 || row >= camera.height || col < 0 || col >= camera.width)
        throw std::out_of_range("pixel (" + std::to_string(row) + ", " + std::to_string(col) +
                                ") outside " + std::to_string(camera.width) + "x" +
                                std::to_string(camera.height) + " image");
    const double x = (col + sub_x - 0.5 * camera.width) / camera.focal;
    const double y = -(row + sub_y - 0.5 * camera.height) / camera.focal;
    const Vec3 local(x, y, -1.0);

    Ray ray;
    ray.origin = camera.pose.translation();
    ray.direction = camera.pose.linear() * local;
    // Adjacent pixel centers are 1/focal apart on the plane at unit depth.
    ray.radius = radius_scale * kPixelRadiusScale / camera.focal;
    return ray;
}

}  // namespace mipnerf

#pragma once

#include "mipnerf/geometry.hpp"

#include <Eigen/Geometry>

namespace mipnerf {

/// Pinhole camera in the Blender/OpenGL convention: the camera looks down its
/// local -z axis with +y up. `pose` maps camera coordinates to world coordinates.
struct Camera {
    Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
    double focal = 1.0;  // pixels
    int width = 1;
    int height = 1;
    double near = 0.0;
    double far = 1.0;

    void validate() const;

    /// Same viewpoint at 1/factor of the resolution (box-downsampled image grid).
    Camera downscaled(int factor) const;

    Vec3 position() const { return pose.translation(); }
};

/// Pixel footprint radius factor: a disk of radius w * 2/sqrt(12) has the same
/// per-axis variance as a square pixel of width w.
inline constexpr double kPixelRadiusScale = 0.57735026918962576451;  // 2 / sqrt(12)

/// Cone through pixel (row, col). `sub_x`/`sub_y` in [0,1) place the ray inside the
/// pixel; the default (0.5, 0.5) is the pixel center. The direction has unit depth
/// along the optical axis, so t is camera depth. Throws std::out_of_range for
/// pixels outside the image.
Ray pixel_cone(const Camera& camera, int row, int col, double sub_x = 0.5, double sub_y = 0.5,
               double radius_scale = 1.0);

}  // namespace mipnerf

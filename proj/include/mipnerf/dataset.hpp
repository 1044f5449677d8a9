#pragma once

#include "mipnerf/camera.hpp"
#include "mipnerf/image.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace mipnerf {

struct Sphere {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;
    Vec3 albedo = Vec3::Constant(0.5);
};

/// Checkered square in the plane z = height.
struct GroundQuad {
    bool enabled = false;
    double height = 0.0;
    double half_extent = 1.0;
    double check_size = 0.25;
    Vec3 albedo_a = Vec3::Constant(0.9);
    Vec3 albedo_b = Vec3::Constant(0.1);
};

/// Analytic lambertian scene lit by one directional light plus ambient.
struct SceneSpec {
    std::string name = "empty";
    std::vector<Sphere> spheres;
    GroundQuad ground;
    Vec3 background = Vec3::Ones();
    Vec3 light_direction = Vec3(0.3, 0.5, 1.0);  // towards the light
    double ambient = 0.35;

    static SceneSpec three_spheres();
    static SceneSpec empty();
    static SceneSpec by_name(const std::string& name);
};

/// Color seen along a ray (any direction scale).
Vec3 shade_ray(const SceneSpec& scene, const Vec3& origin, const Vec3& direction);

/// Ground truth with a regular spp_per_axis x spp_per_axis subpixel grid per pixel.
/// The grid positions at resolution W are a subset-compatible lattice: rendering
/// at W/2 with twice the grid density hits the same subpixel positions.
Image generate_scene(const SceneSpec& scene, const Camera& camera, int spp_per_axis = 4);

/// Mean of each factor x factor block. Throws unless both dimensions divide.
Image box_downsample(const Image& image, int factor);

inline constexpr std::array<int, 4> kScaleFactors = {1, 2, 4, 8};

struct CameraRig {
    std::vector<Camera> train;
    std::vector<Camera> test;
};

/// Camera at `position` looking at the origin with +z up.
Camera look_at_origin(const Vec3& position, double focal, int width, int height, double near, double far);

/// 16 training and 4 test poses on a sphere of radius 4 (near 2, far 6), a fixed
/// spiral so the rig is identical on every run.
CameraRig default_rig(int width = 96, int height = 96, double camera_angle_x = 0.6911112070083618);

/// One image of the multiscale dataset.
struct ScaledView {
    int source = 0;  // index of the full-resolution view
    int factor = 1;
    double weight = 1.0;  // factor^2
    Camera camera;
    Image image;
};

struct MultiscaleDataset {
    std::vector<ScaledView> views;

    std::size_t pixel_count() const;
    /// Views of one scale factor, in source order.
    std::vector<const ScaledView*> at_scale(int factor) const;
};

/// Every view at the factors 1, 2, 4, 8 with divided intrinsics and area weights.
MultiscaleDataset build_multiscale(const std::vector<Image>& images, const std::vector<Camera>& cameras);

/// gen-data: renders the rig and writes <dir>/{train,test}/r_<i>_s<f>.png (plus
/// .f32 sidecars) and <dir>/transforms_{train,test}.json.
void write_dataset(const std::filesystem::path& dir, const SceneSpec& scene, const CameraRig& rig,
                   int spp_per_axis = 4);

/// Loads a split written by write_dataset. Frames without per-scale files fall
/// back to <file_path>.png, downsampled here (Blender-synthetic layout).
/// `float_sidecar` reads the .f32 files instead of decoding PNGs.
MultiscaleDataset load_dataset(const std::filesystem::path& dir, const std::string& split,
                               bool float_sidecar = false);

/// Cameras listed in a transforms file at full resolution.
std::vector<Camera> load_cameras(const std::filesystem::path& dir, const std::string& split);

std::string view_filename(int index, int factor);

}  // namespace mipnerf

#include "mipnerf/dataset.hpp"

#include "mipnerf/parallel.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace mipnerf {

using json = nlohmann::json;

SceneSpec SceneSpec::three_spheres() {
    SceneSpec s;
    s.name = "three-spheres";
    s.spheres = {
        {Vec3(-0.6, -0.4, 0.0), 0.5, Vec3(0.85, 0.2, 0.15)},
        {Vec3(0.7, -0.3, -0.15), 0.35, Vec3(0.2, 0.75, 0.3)},
        {Vec3(0.1, 0.7, 0.1), 0.6, Vec3(0.2, 0.35, 0.85)},
    };
    s.ground.enabled = true;
    s.ground.height = -0.5;
    s.ground.half_extent = 1.5;
    s.ground.check_size = 0.2;
    return s;
}

SceneSpec SceneSpec::empty() { return {}; }

SceneSpec SceneSpec::by_name(const std::string& name) {
    if (name == "three-spheres") return three_spheres();
    if (name == "empty") return empty();
    throw std::invalid_argument("unknown scene '" + name + "' (expected three-spheres, empty)");
}

Vec3 shade_ray(const SceneSpec& scene, const Vec3& origin, const Vec3& direction) {
    double best = std::numeric_limits<double>::infinity();
    Vec3 normal = Vec3::Zero();
    Vec3 albedo = scene.background;

    for (const Sphere& s : scene.spheres) {
        const Vec3 oc = origin - s.center;
        const double a = direction.squaredNorm();
        const double b = oc.dot(direction);
        const double c = oc.squaredNorm() - s.radius * s.radius;
        const double disc = b * b - a * c;
        if (disc < 0.0) continue;
        const double root = std::sqrt(disc);
        double t = (-b - root) / a;
        if (t <= 0.0) t = (-b + root) / a;
        if (t <= 0.0 || t >= best) continue;
        best = t;
        normal = (origin + t * direction - s.center) / s.radius;
        albedo = s.albedo;
    }

    const GroundQuad& g = scene.ground;
    if (g.enabled && direction.z() != 0.0) {
        const double t = (g.height - origin.z()) / direction.z();
        const Vec3 p = origin + t * direction;
        if (t > 0.0 && t < best && std::abs(p.x()) <= g.half_extent && std::abs(p.y()) <= g.half_extent) {
            best = t;
            normal = Vec3(0.0, 0.0, origin.z() > g.height ? 1.0 : -1.0);
            const auto ix = static_cast<long>(std::floor(p.x() / g.check_size));
            const auto iy = static_cast<long>(std::floor(p.y() / g.check_size));
            albedo = ((ix + iy) % 2 == 0) ? g.albedo_a : g.albedo_b;
        }
    }

    if (!std::isfinite(best)) return scene.background;
    const double lambert = std::max(0.0, normal.dot(scene.light_direction.normalized()));
    return albedo * (scene.ambient + (1.0 - scene.ambient) * lambert);
}

Image generate_scene(const SceneSpec& scene, const Camera& camera, int spp_per_axis) {
    camera.validate();
    if (spp_per_axis < 1) throw std::invalid_argument("spp_per_axis must be >= 1");
    Image image(camera.width, camera.height);
    const double inv = 1.0 / spp_per_axis;
    parallel_for(static_cast<std::size_t>(camera.height), [&](std::size_t r) {
        const int row = static_cast<int>(r);
        for (int col = 0; col < camera.width; ++col) {
            Vec3 sum = Vec3::Zero();
            for (int sy = 0; sy < spp_per_axis; ++sy)
                for (int sx = 0; sx < spp_per_axis; ++sx) {
                    const Ray ray = pixel_cone(camera, row, col, (sx + 0.5) * inv, (sy + 0.5) * inv);
                    sum += shade_ray(scene, ray.origin, ray.direction);
                }
            image.at(row, col) = sum * (inv * inv);
        }
    });
    return image;
}

Image box_downsample(const Image& image, int factor) {
    if (factor < 1 || image.width % factor != 0 || image.height % factor != 0)
        throw std::invalid_argument("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                                    " not divisible by factor " + std::to_string(factor));
    Image out(image.width / factor, image.height / factor);
    const double inv = 1.0 / (factor * factor);
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c) {
            Vec3 sum = Vec3::Zero();
            for (int dr = 0; dr < factor; ++dr)
                for (int dc = 0; dc < factor; ++dc) sum += image.at(r * factor + dr, c * factor + dc);
            out.at(r, c) = sum * inv;
        }
    return out;
}

Camera look_at_origin(const Vec3& position, double focal, int width, int height, double near, double far) {
    const Vec3 back = position.normalized();  // camera +z points away from the target
    Vec3 right = Vec3::UnitZ().cross(back);
    if (right.norm() < 1e-9) right = Vec3::UnitX();
    right.normalize();
    const Vec3 up = back.cross(right);
    Camera cam;
    cam.pose.linear().col(0) = right;
    cam.pose.linear().col(1) = up;
    cam.pose.linear().col(2) = back;
    cam.pose.translation() = position;
    cam.focal = focal;
    cam.width = width;
    cam.height = height;
    cam.near = near;
    cam.far = far;
    return cam;
}

CameraRig default_rig(int width, int height, double camera_angle_x) {
    constexpr double kRadius = 4.0;
    constexpr double kNear = 2.0;
    constexpr double kFar = 6.0;
    const double focal = 0.5 * width / std::tan(0.5 * camera_angle_x);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    auto on_sphere = [&](double elevation, double azimuth) {
        const double ring = kRadius * std::cos(elevation);
        return Vec3(ring * std::cos(azimuth), ring * std::sin(azimuth), kRadius * std::sin(elevation));
    };
    CameraRig rig;
    constexpr int kTrain = 16;
    for (int i = 0; i < kTrain; ++i) {
        // Elevations spread evenly over 20..65 degrees.
        const double elevation = (20.0 + 45.0 * (i + 0.5) / kTrain) * std::numbers::pi / 180.0;
        rig.train.push_back(look_at_origin(on_sphere(elevation, i * golden), focal, width, height, kNear, kFar));
    }
    for (int i = 0; i < 4; ++i) {
        const double elevation = (30.0 + 10.0 * (i % 2)) * std::numbers::pi / 180.0;
        const double azimuth = (45.0 + 90.0 * i) * std::numbers::pi / 180.0;
        rig.test.push_back(look_at_origin(on_sphere(elevation, azimuth), focal, width, height, kNear, kFar));
    }
    return rig;
}

std::size_t MultiscaleDataset::pixel_count() const {
    std::size_t n = 0;
    for (const auto& v : views) n += v.image.pixels.size();
    return n;
}

std::vector<const ScaledView*> MultiscaleDataset::at_scale(int factor) const {
    std::vector<const ScaledView*> out;
    for (const auto& v : views)
        if (v.factor == factor) out.push_back(&v);
    return out;
}

MultiscaleDataset build_multiscale(const std::vector<Image>& images, const std::vector<Camera>& cameras) {
    if (images.size() != cameras.size()) throw std::invalid_argument("build_multiscale: one camera per image");
    MultiscaleDataset data;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].width != cameras[i].width || images[i].height != cameras[i].height)
            throw std::invalid_argument("build_multiscale: image and camera sizes differ for view " +
                                        std::to_string(i));
        for (int factor : kScaleFactors) {
            ScaledView v;
            v.source = static_cast<int>(i);
            v.factor = factor;
            v.weight = static_cast<double>(factor) * factor;
            v.camera = cameras[i].downscaled(factor);
            v.image = box_downsample(images[i], factor);
            data.views.push_back(std::move(v));
        }
    }
    return data;
}

std::string view_filename(int index, int factor) {
    return "r_" + std::to_string(index) + "_s" + std::to_string(factor);
}

namespace {

json camera_matrix(const Camera& cam) {
    const Eigen::Matrix4d m = cam.pose.matrix();
    json rows = json::array();
    for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
    return rows;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("bad JSON in " + path.string() + ": " + e.what());
    }
}

struct Frame {
    std::string file_path;
    Camera camera;
};

std::vector<Frame> read_frames(const std::filesystem::path& dir, const std::string& split) {
    const json doc = read_json(dir / ("transforms_" + split + ".json"));
    const double angle = doc.at("camera_angle_x").get<double>();
    const double near = doc.value("near", 2.0);
    const double far = doc.value("far", 6.0);
    const int width = doc.value("width", 0);
    const int height = doc.value("height", 0);

    std::vector<Frame> frames;
    for (const json& f : doc.at("frames")) {
        Frame frame;
        frame.file_path = f.at("file_path").get<std::string>();
        const json& m = f.at("transform_matrix");
        Eigen::Matrix4d mat;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) mat(r, c) = m.at(r).at(c).get<double>();
        frame.camera.pose.matrix() = mat;
        frame.camera.width = width;
        frame.camera.height = height;
        frame.camera.near = near;
        frame.camera.far = far;
        frame.camera.focal = width > 0 ? 0.5 * width / std::tan(0.5 * angle) : angle;  // resolved on load if 0
        frames.push_back(frame);
    }
    return frames;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const SceneSpec& scene, const CameraRig& rig,
                   int spp_per_axis) {
    const std::pair<std::string, const std::vector<Camera>*> splits[] = {{"train", &rig.train}, {"test", &rig.test}};
    for (const auto& [split, cameras] : splits) {
        if (cameras->empty()) continue;
        std::filesystem::create_directories(dir / split);
        const Camera& first = cameras->front();
        json doc;
        doc["camera_angle_x"] = 2.0 * std::atan(0.5 * first.width / first.focal);
        doc["width"] = first.width;
        doc["height"] = first.height;
        doc["near"] = first.near;
        doc["far"] = first.far;
        doc["scene"] = scene.name;
        doc["scales"] = kScaleFactors;
        doc["frames"] = json::array();

        std::vector<Image> images;
        for (std::size_t i = 0; i < cameras->size(); ++i) {
            images.push_back(generate_scene(scene, (*cameras)[i], spp_per_axis));
            doc["frames"].push_back({{"file_path", "./" + split + "/r_" + std::to_string(i)},
                                     {"transform_matrix", camera_matrix((*cameras)[i])}});
        }
        const MultiscaleDataset data = build_multiscale(images, *cameras);
        for (const ScaledView& v : data.views) {
            const auto base = dir / split / view_filename(v.source, v.factor);
            write_png(base.string() + ".png", v.image);
            write_float_image(base.string() + ".f32", v.image);
        }
        std::ofstream out(dir / ("transforms_" + split + ".json"));
        out << doc.dump(2) << '\n';
        if (!out) throw std::runtime_error("failed to write transforms for split " + split);
    }
}

std::vector<Camera> load_cameras(const std::filesystem::path& dir, const std::string& split) {
    std::vector<Camera> cams;
    for (const Frame& f : read_frames(dir, split)) cams.push_back(f.camera);
    return cams;
}

MultiscaleDataset load_dataset(const std::filesystem::path& dir, const std::string& split, bool float_sidecar) {
    const json doc = read_json(dir / ("transforms_" + split + ".json"));
    const double angle = doc.at("camera_angle_x").get<double>();
    const auto frames = read_frames(dir, split);
    const std::string ext = float_sidecar ? ".f32" : ".png";
    auto read = [&](const std::filesystem::path& p) { return float_sidecar ? read_float_image(p) : read_png(p); };

    MultiscaleDataset data;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const Frame& f = frames[i];
        const std::filesystem::path base = dir / f.file_path;
        const std::filesystem::path scaled = base.string() + "_s1" + ext;
        if (!std::filesystem::exists(scaled)) {
            Image full = read(base.string() + ext);
            Camera cam = f.camera;
            cam.width = full.width;
            cam.height = full.height;
            cam.focal = 0.5 * full.width / std::tan(0.5 * angle);
            MultiscaleDataset one = build_multiscale({full}, {cam});
            for (ScaledView& v : one.views) {
                v.source = static_cast<int>(i);
                data.views.push_back(std::move(v));
            }
            continue;
        }
        for (int factor : kScaleFactors) {
            ScaledView v;
            v.source = static_cast<int>(i);
            v.factor = factor;
            v.weight = static_cast<double>(factor) * factor;
            v.camera = f.camera.downscaled(factor);
            v.image = read(base.string() + "_s" + std::to_string(factor) + ext);
            if (v.image.width != v.camera.width || v.image.height != v.camera.height)
                throw std::runtime_error("image size mismatch for " + base.string() + " at factor " +
                                         std::to_string(factor));
            data.views.push_back(std::move(v));
        }
    }
    return data;
}

}  // namespace mipnerf

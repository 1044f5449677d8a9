#pragma once

#include "mipnerf/geometry.hpp"

#include <filesystem>
#include <vector>

namespace mipnerf {

/// Linear RGB float image, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<Vec3> pixels;

    Image() = default;
    Image(int w, int h, const Vec3& fill = Vec3::Zero());

    Vec3& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
    const Vec3& at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

/// 8-bit quantization used by PNG output: round(clamp(v, 0, 1) * 255).
unsigned char quantize8(double v);

/// Writes an 8-bit RGB PNG. Throws std::runtime_error on I/O failure.
void write_png(const std::filesystem::path& path, const Image& image);

/// Reads an 8-bit or 16-bit PNG; gray is expanded and alpha is composited over white.
Image read_png(const std::filesystem::path& path);

/// Float sidecar: int32 width, int32 height, then planar float32 R, G, B (little endian).
void write_float_image(const std::filesystem::path& path, const Image& image);
Image read_float_image(const std::filesystem::path& path);

}  // namespace mipnerf

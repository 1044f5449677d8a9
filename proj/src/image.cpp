#include "mipnerf/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace mipnerf {

static_assert(std::endian::native == std::endian::little, "float sidecar I/O assumes a little-endian host");

Image::Image(int w, int h, const Vec3& fill) : width(w), height(h) {
    if (w < 0 || h < 0) throw std::invalid_argument("image dimensions must be nonnegative");
    pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

unsigned char quantize8(double v) {
    if (!(v > 0.0)) return 0;
    return static_cast<unsigned char>(std::lround(std::min(v, 1.0) * 255.0));
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode) {
    File f(std::fopen(path.c_str(), mode));
    if (!f) throw std::runtime_error("cannot open " + path.string());
    return f;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.width < 1 || image.height < 1) throw std::invalid_argument("cannot write an empty image");
    File file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng initialization failed");
    }
    std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 3);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to write " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < image.height; ++r) {
        for (int c = 0; c < image.width; ++c)
            for (int k = 0; k < 3; ++k) row[3 * c + k] = quantize8(image.at(r, c)[k]);
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(file.get()) != 0) throw std::runtime_error("failed to flush " + path.string());
}

Image read_png(const std::filesystem::path& path) {
    File file = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("libpng initialization failed");
    }
    Image image;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to decode " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    const png_byte color_type = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (png_get_bit_depth(png, info) < 8) png_set_packing(png);
    png_set_filler(png, 0xFF, PNG_FILLER_AFTER);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    buffer.resize(static_cast<std::size_t>(width) * height * 4);
    std::vector<png_bytep> rows(height);
    for (int r = 0; r < height; ++r) rows[r] = buffer.data() + static_cast<std::size_t>(r) * width * 4;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    image = Image(width, height);
    for (std::size_t p = 0; p < image.pixels.size(); ++p) {
        const unsigned char* px = buffer.data() + 4 * p;
        const double alpha = px[3] / 255.0;
        for (int k = 0; k < 3; ++k) image.pixels[p][k] = px[k] / 255.0 * alpha + (1.0 - alpha);
    }
    return image;
}

void write_float_image(const std::filesystem::path& path, const Image& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    const std::int32_t dims[2] = {image.width, image.height};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<float> plane(image.pixels.size());
    for (int k = 0; k < 3; ++k) {
        for (std::size_t p = 0; p < plane.size(); ++p) plane[p] = static_cast<float>(image.pixels[p][k]);
        out.write(reinterpret_cast<const char*>(plane.data()), static_cast<std::streamsize>(plane.size() * 4));
    }
    if (!out) throw std::runtime_error("failed to write " + path.string());
}

Image read_float_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::int32_t dims[2];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in || dims[0] < 0 || dims[1] < 0) throw std::runtime_error("bad float image header in " + path.string());
    Image image(dims[0], dims[1]);
    std::vector<float> plane(image.pixels.size());
    for (int k = 0; k < 3; ++k) {
        in.read(reinterpret_cast<char*>(plane.data()), static_cast<std::streamsize>(plane.size() * 4));
        if (!in) throw std::runtime_error("truncated float image " + path.string());
        for (std::size_t p = 0; p < plane.size(); ++p) image.pixels[p][k] = plane[p];
    }
    return image;
}

}  // namespace mipnerf

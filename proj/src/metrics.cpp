#include "mipnerf/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace mipnerf {

namespace {

void check_same_size(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("image sizes differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                                    " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
    if (a.pixels.empty()) throw std::invalid_argument("metrics need nonempty images");
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_taps() {
    std::array<double, kWindow> taps{};
    double total = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double x = i - kWindow / 2;
        taps[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
        total += taps[i];
    }
    for (double& t : taps) t /= total;
    return taps;
}

// Separable "valid" filtering of one channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int width, int height,
                                 const std::array<double, kWindow>& taps) {
    const int ow = width - kWindow + 1;
    const int oh = height - kWindow + 1;
    std::vector<double> horizontal(static_cast<std::size_t>(ow) * height);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < ow; ++c) {
            double s = 0.0;
            for (int k = 0; k < kWindow; ++k) s += taps[k] * plane[static_cast<std::size_t>(r) * width + c + k];
            horizontal[static_cast<std::size_t>(r) * ow + c] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
            double s = 0.0;
            for (int k = 0; k < kWindow; ++k) s += taps[k] * horizontal[static_cast<std::size_t>(r + k) * ow + c];
            out[static_cast<std::size_t>(r) * ow + c] = s;
        }
    return out;
}

}  // namespace

double mean_squared_error(const Image& a, const Image& b) {
    check_same_size(a, b);
    double total = 0.0;
    for (std::size_t p = 0; p < a.pixels.size(); ++p) total += (a.pixels[p] - b.pixels[p]).squaredNorm();
    return total / (3.0 * static_cast<double>(a.pixels.size()));
}

double psnr(const Image& a, const Image& b) {
    const double mse = mean_squared_error(a, b);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

double ssim(const Image& a, const Image& b) {
    check_same_size(a, b);
    if (a.width < kWindow || a.height < kWindow)
        throw std::invalid_argument("ssim needs images of at least 11x11");
    const auto taps = gaussian_taps();
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    const std::size_t n = a.pixels.size();

    double total = 0.0;
    std::size_t count = 0;
    for (int k = 0; k < 3; ++k) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t p = 0; p < n; ++p) {
            x[p] = a.pixels[p][k];
            y[p] = b.pixels[p][k];
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        const auto mx = filter_valid(x, a.width, a.height, taps);
        const auto my = filter_valid(y, a.width, a.height, taps);
        const auto sxx = filter_valid(xx, a.width, a.height, taps);
        const auto syy = filter_valid(yy, a.width, a.height, taps);
        const auto sxy = filter_valid(xy, a.width, a.height, taps);
        for (std::size_t p = 0; p < mx.size(); ++p) {
            const double vx = sxx[p] - mx[p] * mx[p];
            const double vy = syy[p] - my[p] * my[p];
            const double cov = sxy[p] - mx[p] * my[p];
            total += ((2.0 * mx[p] * my[p] + c1) * (2.0 * cov + c2)) /
                     ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
        }
        count += mx.size();
    }
    return total / static_cast<double>(count);
}

double average_metric(double psnr_db, double ssim_value) {
    if (ssim_value > 1.0) throw std::invalid_argument("ssim must be <= 1");
    if (std::isinf(psnr_db) && psnr_db > 0) return 0.0;
    const double mse = std::pow(10.0, -psnr_db / 10.0);
    return std::sqrt(mse * std::sqrt(1.0 - ssim_value));
}

MetricRow make_metric_row(const std::string& scene, int scale, const std::string& method, const Image& rendered,
                          const Image& truth) {
    MetricRow row{scene, scale, method, psnr(rendered, truth), ssim(rendered, truth), 0.0};
    row.avg2 = average_metric(row.psnr, std::min(row.ssim, 1.0));
    return row;
}

void write_metric_csv_header(std::ostream& out) { out << "scene,scale,method,psnr,ssim,avg2\n"; }

void write_metric_csv_row(std::ostream& out, const MetricRow& row) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g", row.psnr, row.ssim, row.avg2);
    out << row.scene << ',' << row.scale << ',' << row.method << ',' << buf << '\n';
}

}  // namespace mipnerf

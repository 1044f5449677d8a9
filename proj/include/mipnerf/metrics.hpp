#pragma once

#include "mipnerf/image.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace mipnerf {

double mean_squared_error(const Image& a, const Image& b);

/// -10 log10(MSE) for images in [0, 1]; +infinity when the images are identical.
double psnr(const Image& a, const Image& b);

/// Mean local SSIM (11x11 Gaussian window, sigma 1.5, K1 = 0.01, K2 = 0.03, unit
/// dynamic range) over the valid window positions, averaged over channels.
/// Throws for images smaller than the window.
double ssim(const Image& a, const Image& b);

/// sqrt(10^(-psnr/10) * sqrt(1 - ssim)). LPIPS is not part of it, so it is always
/// reported as "avg2".
double average_metric(double psnr_db, double ssim_value);

struct MetricRow {
    std::string scene;
    int scale = 1;
    std::string method;
    double psnr = 0.0;
    double ssim = 0.0;
    double avg2 = 0.0;
};

MetricRow make_metric_row(const std::string& scene, int scale, const std::string& method, const Image& rendered,
                          const Image& truth);

void write_metric_csv_header(std::ostream& out);
void write_metric_csv_row(std::ostream& out, const MetricRow& row);

}  // namespace mipnerf

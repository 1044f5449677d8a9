#include "mipnerf/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

using namespace mipnerf;

namespace {

Image random_image(int w, int h, std::uint64_t seed, bool binary = false) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Image img(w, h);
    for (Vec3& p : img.pixels) {
        p = Vec3(uni(gen), uni(gen), uni(gen));
        if (binary) p = (p.array() > 0.5).cast<double>();
    }
    return img;
}

// Direct per-window SSIM: every statistic summed explicitly at each valid position.
double reference_ssim(const Image& a, const Image& b) {
    const int n = 11;
    double g[n], total = 0.0;
    for (int i = 0; i < n; ++i) {
        g[i] = std::exp(-0.5 * (i - 5) * (i - 5) / (1.5 * 1.5));
        total += g[i];
    }
    for (double& v : g) v /= total;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double sum = 0.0;
    int count = 0;
    for (int ch = 0; ch < 3; ++ch) {
        for (int r = 0; r + n <= a.height; ++r) {
            for (int c = 0; c + n <= a.width; ++c) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        const double w = g[i] * g[j];
                        const double x = a.at(r + i, c + j)[ch], y = b.at(r + i, c + j)[ch];
                        mx += w * x;
                        my += w * y;
                        sxx += w * x * x;
                        syy += w * y * y;
                        sxy += w * x * y;
                    }
                const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
                sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        }
    }
    return sum / count;
}

}  // namespace

TEST(Psnr, IdenticalImagesAreInfinite) {
    const Image a = random_image(8, 8, 1);
    EXPECT_EQ(psnr(a, a), std::numeric_limits<double>::infinity());
}

TEST(Psnr, BlackVersusWhiteIsZero) { EXPECT_NEAR(psnr(Image(4, 4, Vec3::Zero()), Image(4, 4, Vec3::Ones())), 0.0, 1e-12); }

TEST(Psnr, TenthOffsetIsTwentyDecibels) {
    EXPECT_NEAR(psnr(Image(5, 3, Vec3::Zero()), Image(5, 3, Vec3::Constant(0.1))), 20.0, 1e-9);
}

TEST(Psnr, SymmetricInArguments) {
    const Image a = random_image(9, 7, 2), b = random_image(9, 7, 3);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Psnr, RejectsSizeMismatch) { EXPECT_THROW(psnr(Image(4, 4), Image(4, 5)), std::invalid_argument); }

TEST(Ssim, IdenticalImagesScoreOne) {
    for (std::uint64_t seed : {1, 2, 3}) {
        const Image a = random_image(16, 13, seed);
        EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    }
}

TEST(Ssim, InvertedBinaryImageIsNegative) {
    const Image a = random_image(16, 16, 4, true);
    Image inv = a;
    for (Vec3& p : inv.pixels) p = Vec3::Ones() - p;
    EXPECT_LT(ssim(a, inv), 0.0);
}

TEST(Ssim, MatchesDirectWindowLoop) {
    const Image a = random_image(24, 20, 5);
    Image b = a;
    std::mt19937_64 gen(6);
    std::normal_distribution<double> noise(0.0, 0.1);
    for (Vec3& p : b.pixels) p += Vec3(noise(gen), noise(gen), noise(gen));
    EXPECT_NEAR(ssim(a, b), reference_ssim(a, b), 1e-3);
    EXPECT_NEAR(ssim(a, b), reference_ssim(a, b), 1e-9);
}

TEST(Ssim, RejectsImagesSmallerThanWindow) {
    EXPECT_THROW(ssim(Image(10, 20), Image(10, 20)), std::invalid_argument);
}

TEST(AverageMetric, PerfectInputsGiveZero) {
    EXPECT_EQ(average_metric(std::numeric_limits<double>::infinity(), 0.5), 0.0);
    EXPECT_EQ(average_metric(30.0, 1.0), 0.0);
}

TEST(AverageMetric, KnownValue) { EXPECT_NEAR(average_metric(20.0, 0.96), 0.04472, 1e-5); }

TEST(AverageMetric, StrictlyMonotone) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> p(5.0, 45.0), s(0.0, 0.999);
    for (int k = 0; k < 1000; ++k) {
        const double a = p(gen), b = s(gen);
        EXPECT_GT(average_metric(a, b), average_metric(a + 0.5, b));
        EXPECT_GT(average_metric(a, b), average_metric(a, b + 0.0005));
    }
}

TEST(MetricCsv, HeaderAndRow) {
    std::ostringstream out;
    write_metric_csv_header(out);
    write_metric_csv_row(out, {"three-spheres", 8, "mip", 20.0, 0.96, average_metric(20.0, 0.96)});
    const std::string text = out.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "scene,scale,method,psnr,ssim,avg2");
    EXPECT_EQ(text.find("three-spheres,8,mip,20,0.96,"), text.find('\n') + 1);
}

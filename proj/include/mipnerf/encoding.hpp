#pragma once

#include "mipnerf/geometry.hpp"

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mipnerf {

enum class EncodingVariant {
    Pe,        // point positional encoding of the interval midpoint (ray casting)
    Ipe,       // integrated positional encoding of the frustum Gaussian
    ConcatPe,  // PE(mean) ++ PE(signed sqrt of upper-triangular covariance)
};

std::string to_string(EncodingVariant v);
EncodingVariant parse_encoding_variant(const std::string& name);

struct EncodingConfig {
    int degree = 16;      // L for positions
    int view_degree = 4;  // L for view directions
    EncodingVariant variant = EncodingVariant::Ipe;

    void validate() const;
};

// Feature layout, shared by every encoder here, for an n-dimensional input and
// degree L: [sin block | cos block]; each block is frequency-major, so the
// entry for frequency j and dimension i sits at j*n + i of its block.
constexpr int encoded_size(int dims, int degree) { return 2 * dims * degree; }
constexpr int feature_index(int dims, int degree, int frequency, int dim, bool cosine) {
    return (cosine ? dims * degree : 0) + frequency * dims + dim;
}

/// Degrees used by the concatenated encoding for the mean and covariance parts.
inline constexpr int kConcatMeanDegree = 12;
inline constexpr int kConcatCovDegree = 2;
inline constexpr int kConcatFeatureSize = encoded_size(3, kConcatMeanDegree) + encoded_size(6, kConcatCovDegree);

int position_feature_size(const EncodingConfig& config);
int view_feature_size(const EncodingConfig& config);

/// sin/cos of 2^j x_i for any input dimension; `out` must hold encoded_size(x.size(), degree).
void positional_encode(std::span<const double> x, int degree, std::span<double> out);
std::vector<double> positional_encode(const Vec3& x, int degree);

/// (E[sin x], E[cos x]) for x ~ N(mu, var). Throws for negative variance.
std::pair<double, double> expected_trig(double mu, double var);

/// Expected PE under N(mean, diag(cov_diag)); only the diagonal is read.
void integrated_positional_encode(const GaussianRegion& region, int degree, std::span<double> out);
std::vector<double> integrated_positional_encode(const GaussianRegion& region, int degree);

/// Upper-triangular covariance entries, row-major: (00, 01, 02, 11, 12, 22).
std::array<double, 6> covariance_triu(const Mat3& cov);

/// PE(mean, 12) ++ PE(sign(S) * sqrt|S| over the triu entries, 2). Requires region.cov.
void concat_positional_encode(const GaussianRegion& region, std::span<double> out);
std::vector<double> concat_positional_encode(const GaussianRegion& region);

/// Encodes a region according to config.variant. For Pe the region mean is used
/// as the point (callers pass a zero-covariance region at the midpoint).
void encode_region(const GaussianRegion& region, const EncodingConfig& config, std::span<double> out);

/// PE of the normalized direction with config.view_degree.
void encode_view_direction(const Vec3& direction, const EncodingConfig& config, std::span<double> out);

}  // namespace mipnerf

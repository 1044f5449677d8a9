#include "mipnerf/encoding.hpp"

#include <cmath>
#include <stdexcept>

namespace mipnerf {

std::string to_string(EncodingVariant v) {
    switch (v) {
        case EncodingVariant::Pe: return "pe";
        case EncodingVariant::Ipe: return "ipe";
        case EncodingVariant::ConcatPe: return "concat_pe";
    }
    return "unknown";
}

EncodingVariant parse_encoding_variant(const std::string& name) {
    if (name == "pe") return EncodingVariant::Pe;
    if (name == "ipe") return EncodingVariant::Ipe;
    if (name == "concat_pe") return EncodingVariant::ConcatPe;
    throw std::invalid_argument("unknown encoding variant '" + name + "' (expected pe, ipe, concat_pe)");
}

void EncodingConfig::validate() const {
    if (degree < 1) throw std::invalid_argument("encoding degree must be >= 1");
    if (view_degree < 1) throw std::invalid_argument("view encoding degree must be >= 1");
}

int position_feature_size(const EncodingConfig& config) {
    if (config.variant == EncodingVariant::ConcatPe) return kConcatFeatureSize;
    return encoded_size(3, config.degree);
}

int view_feature_size(const EncodingConfig& config) { return encoded_size(3, config.view_degree); }

namespace {

void check_output(std::size_t have, std::size_t need) {
    if (have != need)
        throw std::invalid_argument("encoding output has size " + std::to_string(have) + ", expected " +
                                    std::to_string(need));
}

}  // namespace

void positional_encode(std::span<const double> x, int degree, std::span<double> out) {
    const int dims = static_cast<int>(x.size());
    check_output(out.size(), static_cast<std::size_t>(encoded_size(dims, degree)));
    double scale = 1.0;
    for (int j = 0; j < degree; ++j, scale *= 2.0) {
        for (int i = 0; i < dims; ++i) {
            const double arg = scale * x[i];
            out[feature_index(dims, degree, j, i, false)] = std::sin(arg);
            out[feature_index(dims, degree, j, i, true)] = std::cos(arg);
        }
    }
}

std::vector<double> positional_encode(const Vec3& x, int degree) {
    std::vector<double> out(encoded_size(3, degree));
    positional_encode(std::span<const double>(x.data(), 3), degree, out);
    return out;
}

std::pair<double, double> expected_trig(double mu, double var) {
    if (!(var >= 0.0)) throw std::invalid_argument("expected_trig: variance must be >= 0");
    const double attenuation = std::exp(-0.5 * var);
    return {std::sin(mu) * attenuation, std::cos(mu) * attenuation};
}

void integrated_positional_encode(const GaussianRegion& region, int degree, std::span<double> out) {
    check_output(out.size(), static_cast<std::size_t>(encoded_size(3, degree)));
    for (int i = 0; i < 3; ++i)
        if (!(region.cov_diag[i] >= 0.0))
            throw std::invalid_argument("integrated_positional_encode: negative covariance diagonal");

    double scale = 1.0;
    double var_scale = 1.0;
    for (int j = 0; j < degree; ++j, scale *= 2.0, var_scale *= 4.0) {
        for (int i = 0; i < 3; ++i) {
            const double attenuation = std::exp(-0.5 * var_scale * region.cov_diag[i]);
            const double arg = scale * region.mean[i];
            out[feature_index(3, degree, j, i, false)] = std::sin(arg) * attenuation;
            out[feature_index(3, degree, j, i, true)] = std::cos(arg) * attenuation;
        }
    }
}

std::vector<double> integrated_positional_encode(const GaussianRegion& region, int degree) {
    std::vector<double> out(encoded_size(3, degree));
    integrated_positional_encode(region, degree, out);
    return out;
}

std::array<double, 6> covariance_triu(const Mat3& cov) {
    return {cov(0, 0), cov(0, 1), cov(0, 2), cov(1, 1), cov(1, 2), cov(2, 2)};
}

void concat_positional_encode(const GaussianRegion& region, std::span<double> out) {
    if (!region.cov) throw std::invalid_argument("concat_positional_encode needs the full covariance");
    check_output(out.size(), static_cast<std::size_t>(kConcatFeatureSize));

    const int mean_size = encoded_size(3, kConcatMeanDegree);
    positional_encode(std::span<const double>(region.mean.data(), 3), kConcatMeanDegree,
                      out.subspan(0, mean_size));

    std::array<double, 6> signed_root = covariance_triu(*region.cov);
    for (double& v : signed_root) v = std::copysign(std::sqrt(std::abs(v)), v);
    positional_encode(signed_root, kConcatCovDegree, out.subspan(mean_size));
}

std::vector<double> concat_positional_encode(const GaussianRegion& region) {
    std::vector<double> out(kConcatFeatureSize);
    concat_positional_encode(region, out);
    return out;
}

void encode_region(const GaussianRegion& region, const EncodingConfig& config, std::span<double> out) {
    switch (config.variant) {
        case EncodingVariant::Pe:
            positional_encode(std::span<const double>(region.mean.data(), 3), config.degree, out);
            return;
        case EncodingVariant::Ipe: integrated_positional_encode(region, config.degree, out); return;
        case EncodingVariant::ConcatPe: concat_positional_encode(region, out); return;
    }
}

void encode_view_direction(const Vec3& direction, const EncodingConfig& config, std::span<double> out) {
    const Vec3 unit = direction.normalized();
    positional_encode(std::span<const double>(unit.data(), 3), config.view_degree, out);
}

}  // namespace mipnerf

#pragma once

#include "mipnerf/encoding.hpp"

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mipnerf {

/// Color activation saturates at -eps and 1 + eps.
inline constexpr double kColorPadding = 0.001;
/// Density activation is softplus(raw - kDensityShift).
inline constexpr double kDensityShift = 1.0;

struct MlpLayout {
    int input_dim = 96;
    int view_dim = 24;
    int depth = 4;
    int width = 64;
    int skip_layer = -1;  // trunk layer whose input is [previous hidden; encoded input], -1 for none
    int view_width = 32;

    /// D=4, W=64 trunk without skip.
    static MlpLayout desk(int input_dim, int view_dim);
    /// D=8, W=256 trunk with the input re-injected at the sixth layer, 128-wide view branch.
    static MlpLayout paper_scale(int input_dim, int view_dim);

    void validate() const;
    std::size_t parameter_count() const;

    bool operator==(const MlpLayout&) const = default;
};

/// One dense layer's location inside the flat parameter vector. Weights are
/// column-major rows x cols (out x in); the bias follows the weights.
struct DenseSlice {
    std::string name;
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;

    std::size_t weight_count() const { return static_cast<std::size_t>(rows) * cols; }
    std::size_t bias_offset() const { return offset + weight_count(); }
    std::size_t size() const { return weight_count() + rows; }
};

std::vector<DenseSlice> build_slices(const MlpLayout& layout);

/// The single radiance MLP: encoded position -> ReLU trunk -> density head; trunk ->
/// linear bottleneck ++ encoded view direction -> ReLU -> color head. The view
/// direction enters after the density head, so it can never change tau.
///
/// Parameters live in one flat vector so optimizers, checkpoints and finite
/// differences can address them uniformly. Gradients use the same layout.
template <typename Scalar>
class RadianceMlp {
  public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

    struct Output {
        RowVector tau;  // 1 x N, >= 0
        Matrix rgb;     // 3 x N, in (-eps, 1 + eps)
    };

    /// Activations retained by forward() for the matching backward() call.
    struct Cache {
        Matrix positions;
        Matrix views;
        std::vector<Matrix> hidden;  // post-ReLU output of every trunk layer
        RowVector raw_tau;
        Matrix bottleneck;
        Matrix view_hidden;
        Matrix color_sigmoid;
        bool valid = false;
    };

    RadianceMlp() = default;
    explicit RadianceMlp(const MlpLayout& layout);

    /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
    void initialize(std::uint64_t seed);

    const MlpLayout& layout() const { return layout_; }
    const std::vector<DenseSlice>& slices() const { return slices_; }
    std::size_t parameter_count() const { return params_.size(); }
    std::span<Scalar> parameters() { return params_; }
    std::span<const Scalar> parameters() const { return params_; }

    /// positions: input_dim x N, views: view_dim x N. `cache` may be null for inference.
    void forward(const Matrix& positions, const Matrix& views, Output& out, Cache* cache) const;

    /// Accumulates (+=) dL/dparams into `grad` (size parameter_count()). Optionally
    /// writes dL/dpositions. Throws std::logic_error on a missing or mismatched cache.
    void backward(const Cache& cache, const RowVector& d_tau, const Matrix& d_rgb, std::span<Scalar> grad,
                  Matrix* d_positions = nullptr) const;

    template <typename Other>
    RadianceMlp<Other> cast() const {
        RadianceMlp<Other> other(layout_);
        auto dst = other.parameters();
        for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<Other>(params_[i]);
        return other;
    }

  private:
    using Map = Eigen::Map<Matrix>;
    using ConstMap = Eigen::Map<const Matrix>;
    using ConstVecMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

    ConstMap weights(std::size_t layer) const;
    ConstVecMap bias(std::size_t layer) const;

    MlpLayout layout_;
    std::vector<DenseSlice> slices_;
    // Aligned so the vectorized kernels reading weight maps see the same alignment on every run.
    std::vector<Scalar, Eigen::aligned_allocator<Scalar>> params_;
};

/// A radiance field: one MLP queried by both sampling passes, or (two-MLP
/// ablation) separate coarse and fine networks.
template <typename Scalar>
struct RadianceModel {
    EncodingConfig encoding;
    std::vector<RadianceMlp<Scalar>> mlps;

    static RadianceModel create(const EncodingConfig& encoding, const MlpLayout& layout, bool two_mlps,
                                std::uint64_t seed);

    bool two_mlps() const { return mlps.size() == 2; }
    const RadianceMlp<Scalar>& coarse() const { return mlps.front(); }
    const RadianceMlp<Scalar>& fine() const { return mlps.back(); }
    std::size_t parameter_count() const;

    template <typename Other>
    RadianceModel<Other> cast() const {
        RadianceModel<Other> other;
        other.encoding = encoding;
        for (const auto& m : mlps) other.mlps.push_back(m.template cast<Other>());
        return other;
    }
};

/// Layout matching an encoding config at the given trunk size.
MlpLayout layout_for(const EncodingConfig& encoding, int depth, int width, bool paper_scale = false);

extern template class RadianceMlp<float>;
extern template class RadianceMlp<double>;
extern template struct RadianceModel<float>;
extern template struct RadianceModel<double>;

}  // namespace mipnerf

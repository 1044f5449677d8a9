#include "mipnerf/field.hpp"

#include "mipnerf/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace mipnerf {

MlpLayout MlpLayout::desk(int input_dim, int view_dim) {
    MlpLayout l;
    l.input_dim = input_dim;
    l.view_dim = view_dim;
    l.depth = 4;
    l.width = 64;
    l.skip_layer = -1;
    l.view_width = 32;
    return l;
}

MlpLayout MlpLayout::paper_scale(int input_dim, int view_dim) {
    MlpLayout l;
    l.input_dim = input_dim;
    l.view_dim = view_dim;
    l.depth = 8;
    l.width = 256;
    l.skip_layer = 5;
    l.view_width = 128;
    return l;
}

void MlpLayout::validate() const {
    if (input_dim < 1 || view_dim < 0 || depth < 1 || width < 1 || view_width < 1)
        throw std::invalid_argument("invalid MLP layout dimensions");
    if (skip_layer != -1 && (skip_layer < 1 || skip_layer >= depth))
        throw std::invalid_argument("skip layer must be in [1, depth) or -1");
}

std::vector<DenseSlice> build_slices(const MlpLayout& layout) {
    layout.validate();
    std::vector<DenseSlice> slices;
    std::size_t offset = 0;
    auto add = [&](std::string name, int rows, int cols) {
        DenseSlice s{std::move(name), offset, rows, cols};
        offset += s.size();
        slices.push_back(std::move(s));
    };
    for (int l = 0; l < layout.depth; ++l) {
        int in = (l == 0) ? layout.input_dim : layout.width;
        if (l == layout.skip_layer) in += layout.input_dim;
        add("trunk_" + std::to_string(l), layout.width, in);
    }
    add("density", 1, layout.width);
    add("bottleneck", layout.width, layout.width);
    add("view", layout.view_width, layout.width + layout.view_dim);
    add("rgb", 3, layout.view_width);
    return slices;
}

std::size_t MlpLayout::parameter_count() const {
    std::size_t n = 0;
    for (const auto& s : build_slices(*this)) n += s.size();
    return n;
}

MlpLayout layout_for(const EncodingConfig& encoding, int depth, int width, bool paper_scale) {
    const int in = position_feature_size(encoding);
    const int view = view_feature_size(encoding);
    if (paper_scale) return MlpLayout::paper_scale(in, view);
    MlpLayout l = MlpLayout::desk(in, view);
    l.depth = depth;
    l.width = width;
    l.view_width = std::max(1, width / 2);
    l.validate();
    return l;
}

namespace {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar softplus(Scalar x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// dst += src with src evaluated into aligned storage first. Writing a product
// straight into a gradient map lets the kernel choice depend on the map's address.
template <typename Dst, typename Src>
void accumulate(Dst&& dst, const Eigen::MatrixBase<Src>& src) {
    const typename Src::PlainObject value = src;
    dst += value;
}

}  // namespace

template <typename Scalar>
RadianceMlp<Scalar>::RadianceMlp(const MlpLayout& layout) : layout_(layout), slices_(build_slices(layout)) {
    params_.assign(layout_.parameter_count(), Scalar(0));
}

template <typename Scalar>
void RadianceMlp<Scalar>::initialize(std::uint64_t seed) {
    for (std::size_t l = 0; l < slices_.size(); ++l) {
        const DenseSlice& s = slices_[l];
        CounterRng rng(seed, 0x1A7E5ULL, l);
        const double bound = std::sqrt(6.0 / s.cols);
        for (std::size_t i = 0; i < s.weight_count(); ++i)
            params_[s.offset + i] = static_cast<Scalar>((2.0 * rng.uniform() - 1.0) * bound);
        for (int i = 0; i < s.rows; ++i) params_[s.bias_offset() + i] = Scalar(0);
    }
}

template <typename Scalar>
typename RadianceMlp<Scalar>::ConstMap RadianceMlp<Scalar>::weights(std::size_t layer) const {
    const DenseSlice& s = slices_[layer];
    return ConstMap(params_.data() + s.offset, s.rows, s.cols);
}

template <typename Scalar>
typename RadianceMlp<Scalar>::ConstVecMap RadianceMlp<Scalar>::bias(std::size_t layer) const {
    const DenseSlice& s = slices_[layer];
    return ConstVecMap(params_.data() + s.bias_offset(), s.rows);
}

template <typename Scalar>
void RadianceMlp<Scalar>::forward(const Matrix& positions, const Matrix& views, Output& out, Cache* cache) const {
    const int depth = layout_.depth;
    const int width = layout_.width;
    const Eigen::Index n = positions.cols();
    if (positions.rows() != layout_.input_dim || views.rows() != layout_.view_dim || views.cols() != n)
        throw std::invalid_argument("RadianceMlp::forward: expected inputs " + std::to_string(layout_.input_dim) +
                                    "x N and " + std::to_string(layout_.view_dim) + "x N, got " +
                                    std::to_string(positions.rows()) + "x" + std::to_string(n) + " and " +
                                    std::to_string(views.rows()) + "x" + std::to_string(views.cols()));

    Cache local;
    Cache& c = cache ? *cache : local;
    c.valid = false;
    c.hidden.resize(depth);

    for (int l = 0; l < depth; ++l) {
        const auto w = weights(l);
        Matrix& h = c.hidden[l];
        if (l == 0) {
            h.noalias() = w * positions;
        } else if (l == layout_.skip_layer) {
            h.noalias() = w.leftCols(width) * c.hidden[l - 1];
            h.noalias() += w.rightCols(layout_.input_dim) * positions;
        } else {
            h.noalias() = w * c.hidden[l - 1];
        }
        h.colwise() += bias(l);
        h = h.cwiseMax(Scalar(0));
    }
    const Matrix& top = c.hidden[depth - 1];

    const std::size_t density = depth, bottleneck = depth + 1, view = depth + 2, rgb = depth + 3;

    c.raw_tau.noalias() = weights(density) * top;
    c.raw_tau.array() += bias(density)(0);
    out.tau.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) out.tau(i) = softplus(c.raw_tau(i) - Scalar(kDensityShift));

    c.bottleneck.noalias() = weights(bottleneck) * top;
    c.bottleneck.colwise() += bias(bottleneck);

    const auto wv = weights(view);
    c.view_hidden.noalias() = wv.leftCols(width) * c.bottleneck;
    if (layout_.view_dim > 0) c.view_hidden.noalias() += wv.rightCols(layout_.view_dim) * views;
    c.view_hidden.colwise() += bias(view);
    c.view_hidden = c.view_hidden.cwiseMax(Scalar(0));

    Matrix raw_rgb;
    raw_rgb.noalias() = weights(rgb) * c.view_hidden;
    raw_rgb.colwise() += bias(rgb);
    c.color_sigmoid = raw_rgb.unaryExpr([](Scalar x) { return sigmoid(x); });
    const Scalar pad = Scalar(kColorPadding);
    out.rgb = (Scalar(1) + Scalar(2) * pad) * c.color_sigmoid.array() - pad;

    if (cache) {
        c.positions = positions;
        c.views = views;
        c.valid = true;
    }
}

template <typename Scalar>
void RadianceMlp<Scalar>::backward(const Cache& c, const RowVector& d_tau, const Matrix& d_rgb,
                                   std::span<Scalar> grad, Matrix* d_positions) const {
    if (!c.valid) throw std::logic_error("RadianceMlp::backward called without a forward cache");
    const int depth = layout_.depth;
    const int width = layout_.width;
    const Eigen::Index n = c.positions.cols();
    if (static_cast<int>(c.hidden.size()) != depth || c.positions.rows() != layout_.input_dim)
        throw std::logic_error("RadianceMlp::backward: cache does not match this network");
    if (d_tau.cols() != n || d_rgb.cols() != n || d_rgb.rows() != 3)
        throw std::invalid_argument("RadianceMlp::backward: upstream gradient shape mismatch");
    if (grad.size() != params_.size()) throw std::invalid_argument("RadianceMlp::backward: gradient size mismatch");

    auto grad_w = [&](std::size_t layer) {
        const DenseSlice& s = slices_[layer];
        return Map(grad.data() + s.offset, s.rows, s.cols);
    };
    auto grad_b = [&](std::size_t layer) {
        const DenseSlice& s = slices_[layer];
        return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(grad.data() + s.bias_offset(), s.rows);
    };

    const std::size_t density = depth, bottleneck = depth + 1, view = depth + 2, rgb = depth + 3;
    const Matrix& top = c.hidden[depth - 1];

    // Color head.
    const Scalar scale = Scalar(1) + Scalar(2) * Scalar(kColorPadding);
    Matrix d_raw_rgb = (d_rgb.array() * scale * c.color_sigmoid.array() * (Scalar(1) - c.color_sigmoid.array())).matrix();
    accumulate(grad_w(rgb), d_raw_rgb * c.view_hidden.transpose());
    accumulate(grad_b(rgb), d_raw_rgb.rowwise().sum());

    Matrix d_view_hidden;
    d_view_hidden.noalias() = weights(rgb).transpose() * d_raw_rgb;
    d_view_hidden = (c.view_hidden.array() > Scalar(0)).select(d_view_hidden, Scalar(0));

    auto gw_view = grad_w(view);
    accumulate(gw_view.leftCols(width), d_view_hidden * c.bottleneck.transpose());
    if (layout_.view_dim > 0) accumulate(gw_view.rightCols(layout_.view_dim), d_view_hidden * c.views.transpose());
    accumulate(grad_b(view), d_view_hidden.rowwise().sum());

    Matrix d_bottleneck;
    d_bottleneck.noalias() = weights(view).leftCols(width).transpose() * d_view_hidden;
    accumulate(grad_w(bottleneck), d_bottleneck * top.transpose());
    accumulate(grad_b(bottleneck), d_bottleneck.rowwise().sum());

    // Density head: d softplus(x - shift) / dx = sigmoid(x - shift).
    RowVector d_raw_tau(n);
    for (Eigen::Index i = 0; i < n; ++i)
        d_raw_tau(i) = d_tau(i) * sigmoid(c.raw_tau(i) - Scalar(kDensityShift));
    accumulate(grad_w(density), d_raw_tau * top.transpose());
    grad_b(density)(0) += d_raw_tau.sum();

    Matrix d_hidden;
    d_hidden.noalias() = weights(bottleneck).transpose() * d_bottleneck;
    d_hidden.noalias() += weights(density).transpose() * d_raw_tau;

    if (d_positions) d_positions->setZero(layout_.input_dim, n);

    for (int l = depth - 1; l >= 0; --l) {
        Matrix d_z = (c.hidden[l].array() > Scalar(0)).select(d_hidden, Scalar(0));
        accumulate(grad_b(l), d_z.rowwise().sum());
        const auto w = weights(l);
        auto gw = grad_w(l);
        if (l == 0) {
            accumulate(gw, d_z * c.positions.transpose());
            if (d_positions) d_positions->noalias() += w.transpose() * d_z;
        } else if (l == layout_.skip_layer) {
            accumulate(gw.leftCols(width), d_z * c.hidden[l - 1].transpose());
            accumulate(gw.rightCols(layout_.input_dim), d_z * c.positions.transpose());
            if (d_positions) d_positions->noalias() += w.rightCols(layout_.input_dim).transpose() * d_z;
            d_hidden.noalias() = w.leftCols(width).transpose() * d_z;
        } else {
            accumulate(gw, d_z * c.hidden[l - 1].transpose());
            d_hidden.noalias() = w.transpose() * d_z;
        }
    }
}

template <typename Scalar>
RadianceModel<Scalar> RadianceModel<Scalar>::create(const EncodingConfig& encoding, const MlpLayout& layout,
                                                    bool two_mlps, std::uint64_t seed) {
    encoding.validate();
    if (layout.input_dim != position_feature_size(encoding) || layout.view_dim != view_feature_size(encoding))
        throw std::invalid_argument("MLP layout does not match the encoding feature sizes");
    RadianceModel model;
    model.encoding = encoding;
    const int count = two_mlps ? 2 : 1;
    for (int i = 0; i < count; ++i) {
        RadianceMlp<Scalar> mlp(layout);
        mlp.initialize(hash_combine(seed, static_cast<std::uint64_t>(i)));
        model.mlps.push_back(std::move(mlp));
    }
    return model;
}

template <typename Scalar>
std::size_t RadianceModel<Scalar>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& m : mlps) n += m.parameter_count();
    return n;
}

template class RadianceMlp<float>;
template class RadianceMlp<double>;
template struct RadianceModel<float>;
template struct RadianceModel<double>;

}  // namespace mipnerf

#pragma once

#include "mipnerf/camera.hpp"
#include "mipnerf/field.hpp"
#include "mipnerf/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mipnerf {

struct RenderConfig {
    int n_coarse = 128;
    int n_fine = 128;
    double alpha = 0.01;  // padding added to the blurred weights before resampling
    double t_near = 2.0;
    double t_far = 6.0;
    int supersample = 1;
    bool white_background = false;
    bool randomized = true;  // jitter stratified and inverse-CDF samples
    // Two-MLP ablation: the fine pass sees the sorted union of coarse t's and
    // n_fine new draws instead of n_fine + 1 fresh draws.
    bool union_fine = false;

    void validate() const;
};

/// `count` sorted values, one per equal-width bin over [near, far]. With a null
/// rng every value sits at its bin center.
std::vector<double> stratified_samples(double near, double far, int count, CounterRng* rng);

struct Composite {
    Vec3 color = Vec3::Zero();
    std::vector<double> weights;        // w_k = T_k (1 - exp(-tau_k delta_k))
    std::vector<double> transmittance;  // T_k, T_0 = 1
    double opacity = 0.0;               // sum of weights
};

/// Quadrature of the volume rendering integral over n intervals given n + 1 t's.
/// Throws on negative tau or inconsistent lengths.
Composite composite(std::span<const double> tau, std::span<const Vec3> rgb, std::span<const double> t,
                    bool white_background = false);

/// Reverse pass of composite(): writes dL/dtau and dL/drgb for an upstream dL/dcolor.
void composite_backward(std::span<const double> tau, std::span<const Vec3> rgb, std::span<const double> t,
                        const Composite& forward, const Vec3& d_color, bool white_background,
                        std::span<double> d_tau, std::span<Vec3> d_rgb);

/// 2-tap max then 2-tap blur (zero padded), plus alpha, normalized to sum 1.
/// Throws when the result cannot be normalized (all-zero weights and alpha == 0).
std::vector<double> blurpool_weights(std::span<const double> weights, double alpha);

/// `count` sorted draws from the piecewise-constant density `pdf` over the
/// intervals [edges[k], edges[k+1]]. Stratified in u when rng is given,
/// u_k = (k + 1/2) / count otherwise.
std::vector<double> inverse_transform_sample(std::span<const double> pdf, std::span<const double> edges, int count,
                                             CounterRng* rng);

/// One interval of one ray, queried as a conical frustum.
struct IntervalQuery {
    std::size_t ray = 0;
    double t0 = 0.0;
    double t1 = 0.0;
};

/// Samples, field outputs and compositing results of one pass over a batch of rays.
struct PassRecord {
    std::vector<std::size_t> t_begin;  // ray r owns t[t_begin[r] .. t_begin[r+1])
    std::vector<double> t;
    std::vector<IntervalQuery> queries;  // ray r owns queries[t_begin[r] - r ..)
    std::vector<double> tau;
    std::vector<Vec3> rgb;
    std::vector<Composite> composites;

    std::size_t ray_count() const { return composites.size(); }
    std::size_t query_begin(std::size_t r) const { return t_begin[r] - r; }
    std::size_t interval_count(std::size_t r) const { return t_begin[r + 1] - t_begin[r] - 1; }
    std::span<const double> ray_t(std::size_t r) const {
        return std::span<const double>(t).subspan(t_begin[r], interval_count(r) + 1);
    }
};

enum class Pass { Coarse = 0, Fine = 1 };

/// Fills tau (>= 0) and rgb for every query of a pass.
using PassEvaluator = std::function<void(Pass pass, std::span<const Ray> rays, std::span<const IntervalQuery> queries,
                                         std::span<double> tau, std::span<Vec3> rgb)>;

struct HierarchyResult {
    PassRecord coarse;
    PassRecord fine;
};

/// Coarse stratified pass, blurpool-filtered inverse-transform resampling, fine
/// pass. Each ray draws from its own stream keyed by ray_keys[r]. When
/// `frozen_fine` is given, those t-vectors replace the resampling step (used to
/// hold samples fixed under finite differences).
HierarchyResult render_hierarchy(std::span<const Ray> rays, std::span<const std::uint64_t> ray_keys,
                                 const RenderConfig& config, const PassEvaluator& evaluate,
                                 const std::vector<std::vector<double>>* frozen_fine = nullptr);

/// Featurizes a pass's intervals: one column per query. The region depends on
/// the encoding variant (frustum Gaussian, midpoint, or full covariance).
template <typename Scalar>
void featurize(const EncodingConfig& encoding, std::span<const Ray> rays, std::span<const IntervalQuery> queries,
               Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& positions,
               Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& views);

/// Evaluates a model for render_hierarchy, optionally keeping the forward caches
/// of both passes so gradients can be pulled back afterwards.
template <typename Scalar>
class MlpEvaluator {
  public:
    using Mlp = RadianceMlp<Scalar>;

    MlpEvaluator(const RadianceModel<Scalar>& model, bool keep_cache) : model_(&model), keep_cache_(keep_cache) {}

    void operator()(Pass pass, std::span<const Ray> rays, std::span<const IntervalQuery> queries,
                    std::span<double> tau, std::span<Vec3> rgb);

    PassEvaluator as_function() {
        return [this](Pass p, std::span<const Ray> r, std::span<const IntervalQuery> q, std::span<double> tau,
                      std::span<Vec3> rgb) { (*this)(p, r, q, tau, rgb); };
    }

    /// Accumulates parameter gradients of one pass into grads[mlp index].
    void backward(Pass pass, std::span<const double> d_tau, std::span<const Vec3> d_rgb,
                  std::vector<std::vector<Scalar>>& grads) const;

  private:
    const RadianceModel<Scalar>* model_;
    bool keep_cache_;
    typename Mlp::Cache caches_[2];
};

/// Pixel colors (coarse, fine) averaged over `config.supersample` jittered cones.
struct PixelColor {
    Vec3 coarse = Vec3::Zero();
    Vec3 fine = Vec3::Zero();
};

/// Rays for one pixel: the centered cone when supersample == 1, otherwise
/// `supersample` uniformly jittered cones with radius shrunk by 1/sqrt(supersample).
std::vector<Ray> pixel_rays(const Camera& camera, int row, int col, int supersample, CounterRng& rng);

/// Stream key for pixel `index` of an image rendered with `seed`.
std::uint64_t pixel_key(std::uint64_t seed, std::uint64_t index);

PixelColor render_pixel(const PassEvaluator& evaluate, const Camera& camera, int row, int col,
                        const RenderConfig& config, std::uint64_t seed);

/// Renders every pixel (fine colors). Pixels are independent and processed in
/// fixed-size chunks; results do not depend on the thread count.
struct RenderedImage {
    int width = 0;
    int height = 0;
    std::vector<Vec3> coarse;
    std::vector<Vec3> fine;
};

RenderedImage render_image(const RadianceModel<float>& model, const Camera& camera, const RenderConfig& config,
                           std::uint64_t seed);

extern template class MlpEvaluator<float>;
extern template class MlpEvaluator<double>;

}  // namespace mipnerf

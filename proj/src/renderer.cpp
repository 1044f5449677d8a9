#include "mipnerf/renderer.hpp"

#include "mipnerf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mipnerf {

void RenderConfig::validate() const {
    if (n_coarse < 1 || n_fine < 1) throw std::invalid_argument("sample counts must be >= 1");
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
    if (!(t_near < t_far) || t_near < 0.0) throw std::invalid_argument("render needs 0 <= t_near < t_far");
    if (supersample < 1) throw std::invalid_argument("supersample must be >= 1");
}

std::vector<double> stratified_samples(double near, double far, int count, CounterRng* rng) {
    if (!(near < far)) throw std::invalid_argument("stratified_samples needs near < far");
    if (count < 1) throw std::invalid_argument("stratified_samples needs count >= 1");
    const double width = (far - near) / count;
    std::vector<double> t(count);
    for (int k = 0; k < count; ++k) {
        const double u = rng ? rng->uniform() : 0.5;
        t[k] = near + (k + u) * width;
    }
    return t;
}

namespace {

void check_composite_inputs(std::span<const double> tau, std::span<const Vec3> rgb, std::span<const double> t) {
    if (tau.empty() || rgb.size() != tau.size() || t.size() != tau.size() + 1)
        throw std::invalid_argument("composite needs n densities, n colors and n + 1 distances; got " +
                                    std::to_string(tau.size()) + ", " + std::to_string(rgb.size()) + ", " +
                                    std::to_string(t.size()));
}

}  // namespace

Composite composite(std::span<const double> tau, std::span<const Vec3> rgb, std::span<const double> t,
                    bool white_background) {
    check_composite_inputs(tau, rgb, t);
    const std::size_t n = tau.size();
    Composite out;
    out.weights.resize(n);
    out.transmittance.resize(n);

    double transmittance = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (!(tau[k] >= 0.0)) throw std::invalid_argument("composite: negative or NaN density");
        const double optical_depth = tau[k] * (t[k + 1] - t[k]);
        const double alpha = -std::expm1(-optical_depth);
        out.transmittance[k] = transmittance;
        out.weights[k] = transmittance * alpha;
        out.color += out.weights[k] * rgb[k];
        out.opacity += out.weights[k];
        transmittance *= std::exp(-optical_depth);
    }
    if (white_background) out.color += Vec3::Constant(1.0 - out.opacity);
    return out;
}

void composite_backward(std::span<const double> tau, std::span<const Vec3> rgb, std::span<const double> t,
                        const Composite& forward, const Vec3& d_color, bool white_background,
                        std::span<double> d_tau, std::span<Vec3> d_rgb) {
    check_composite_inputs(tau, rgb, t);
    const std::size_t n = tau.size();
    if (d_tau.size() != n || d_rgb.size() != n || forward.weights.size() != n)
        throw std::invalid_argument("composite_backward: size mismatch");

    const double background = white_background ? d_color.sum() : 0.0;
    // dL/dw_k, then dw_j/dtau_k = delta_k (T_{k+1} [j == k] - w_j [j > k]).
    double suffix = 0.0;  // sum_{j > k} w_j g_j
    for (std::size_t i = n; i-- > 0;) {
        const double g = d_color.dot(rgb[i]) - background;
        const double delta = t[i + 1] - t[i];
        const double next_transmittance = forward.transmittance[i] * std::exp(-tau[i] * delta);
        d_tau[i] = delta * (next_transmittance * g - suffix);
        d_rgb[i] = forward.weights[i] * d_color;
        suffix += forward.weights[i] * g;
    }
}

std::vector<double> blurpool_weights(std::span<const double> weights, double alpha) {
    const std::size_t n = weights.size();
    if (n == 0) throw std::invalid_argument("blurpool_weights: empty weights");
    if (!(alpha >= 0.0)) throw std::invalid_argument("blurpool_weights: alpha must be >= 0");
    for (double w : weights)
        if (!(w >= 0.0)) throw std::invalid_argument("blurpool_weights: weights must be >= 0");

    auto at = [&](std::ptrdiff_t k) { return (k < 0 || k >= static_cast<std::ptrdiff_t>(n)) ? 0.0 : weights[k]; };
    std::vector<double> out(n);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<std::ptrdiff_t>(k);
        out[k] = 0.5 * (std::max(at(i - 1), at(i)) + std::max(at(i), at(i + 1))) + alpha;
        total += out[k];
    }
    if (!(total > 0.0)) throw std::invalid_argument("blurpool_weights: cannot normalize all-zero weights with alpha = 0");
    for (double& v : out) v /= total;
    return out;
}

std::vector<double> inverse_transform_sample(std::span<const double> pdf, std::span<const double> edges, int count,
                                             CounterRng* rng) {
    const std::size_t n = pdf.size();
    if (n == 0 || edges.size() != n + 1) throw std::invalid_argument("inverse_transform_sample: need n + 1 edges");
    if (count < 1) throw std::invalid_argument("inverse_transform_sample: count must be >= 1");
    double total = 0.0;
    for (double p : pdf) {
        if (!(p >= 0.0)) throw std::invalid_argument("inverse_transform_sample: pdf must be nonnegative");
        total += p;
    }
    if (!(std::abs(total - 1.0) <= 1e-6)) throw std::invalid_argument("inverse_transform_sample: pdf must sum to 1");
    for (std::size_t k = 0; k < n; ++k)
        if (!(edges[k + 1] > edges[k])) throw std::invalid_argument("inverse_transform_sample: edges must increase");

    std::vector<double> cdf(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) cdf[k + 1] = cdf[k] + pdf[k];
    for (double& c : cdf) c /= cdf[n];
    cdf[n] = 1.0;

    std::vector<double> out(count);
    for (int s = 0; s < count; ++s) {
        const double u = (s + (rng ? rng->uniform() : 0.5)) / count;
        // cdf[k] <= u < cdf[k + 1] implies pdf[k] > 0.
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        const std::size_t k = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - cdf.begin() - 1, 0), n - 1);
        const double span = cdf[k + 1] - cdf[k];
        const double frac = span > 0.0 ? std::clamp((u - cdf[k]) / span, 0.0, 1.0) : 0.0;
        out[s] = edges[k] + frac * (edges[k + 1] - edges[k]);
    }
    return out;
}

namespace {

void build_queries(PassRecord& rec) {
    const std::size_t rays = rec.t_begin.size() - 1;
    rec.queries.clear();
    rec.queries.reserve(rec.t.size() - rays);
    for (std::size_t r = 0; r < rays; ++r)
        for (std::size_t i = rec.t_begin[r]; i + 1 < rec.t_begin[r + 1]; ++i)
            rec.queries.push_back({r, rec.t[i], rec.t[i + 1]});
}

void evaluate_pass(PassRecord& rec, Pass pass, std::span<const Ray> rays, const RenderConfig& config,
                   const PassEvaluator& evaluate) {
    build_queries(rec);
    rec.tau.assign(rec.queries.size(), 0.0);
    rec.rgb.assign(rec.queries.size(), Vec3::Zero());
    evaluate(pass, rays, rec.queries, rec.tau, rec.rgb);

    const std::size_t n_rays = rays.size();
    rec.composites.resize(n_rays);
    for (std::size_t r = 0; r < n_rays; ++r) {
        const std::size_t q0 = rec.query_begin(r);
        const std::size_t n = rec.interval_count(r);
        rec.composites[r] = composite(std::span<const double>(rec.tau).subspan(q0, n),
                                      std::span<const Vec3>(rec.rgb).subspan(q0, n), rec.ray_t(r),
                                      config.white_background);
    }
}

}  // namespace

HierarchyResult render_hierarchy(std::span<const Ray> rays, std::span<const std::uint64_t> ray_keys,
                                 const RenderConfig& config, const PassEvaluator& evaluate,
                                 const std::vector<std::vector<double>>* frozen_fine) {
    config.validate();
    if (ray_keys.size() != rays.size()) throw std::invalid_argument("render_hierarchy: one key per ray required");
    if (frozen_fine && frozen_fine->size() != rays.size())
        throw std::invalid_argument("render_hierarchy: frozen samples must cover every ray");
    const std::size_t n_rays = rays.size();
    HierarchyResult result;

    PassRecord& coarse = result.coarse;
    coarse.t_begin.assign(1, 0);
    for (std::size_t r = 0; r < n_rays; ++r) {
        CounterRng rng(ray_keys[r], static_cast<std::uint64_t>(Pass::Coarse));
        const auto t = stratified_samples(config.t_near, config.t_far, config.n_coarse + 1,
                                          config.randomized ? &rng : nullptr);
        coarse.t.insert(coarse.t.end(), t.begin(), t.end());
        coarse.t_begin.push_back(coarse.t.size());
    }
    evaluate_pass(coarse, Pass::Coarse, rays, config, evaluate);

    PassRecord& fine = result.fine;
    fine.t_begin.assign(1, 0);
    for (std::size_t r = 0; r < n_rays; ++r) {
        std::vector<double> t;
        if (frozen_fine) {
            t = (*frozen_fine)[r];
        } else {
            CounterRng rng(ray_keys[r], static_cast<std::uint64_t>(Pass::Fine));
            const auto pdf = blurpool_weights(coarse.composites[r].weights, config.alpha);
            const auto edges = coarse.ray_t(r);
            const int draws = config.union_fine ? config.n_fine : config.n_fine + 1;
            t = inverse_transform_sample(pdf, edges, draws, config.randomized ? &rng : nullptr);
            if (config.union_fine) {
                std::vector<double> merged(t.size() + edges.size());
                std::merge(t.begin(), t.end(), edges.begin(), edges.end(), merged.begin());
                merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
                t = std::move(merged);
            }
        }
        fine.t.insert(fine.t.end(), t.begin(), t.end());
        fine.t_begin.push_back(fine.t.size());
    }
    evaluate_pass(fine, Pass::Fine, rays, config, evaluate);
    return result;
}

template <typename Scalar>
void featurize(const EncodingConfig& encoding, std::span<const Ray> rays, std::span<const IntervalQuery> queries,
               Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& positions,
               Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& views) {
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const int in_dim = position_feature_size(encoding);
    const int view_dim = view_feature_size(encoding);
    const auto n = static_cast<Eigen::Index>(queries.size());
    positions.resize(in_dim, n);
    views.resize(view_dim, n);

    std::vector<double> view_feature(view_dim);
    std::size_t cached_ray = static_cast<std::size_t>(-1);
    for (Eigen::Index q = 0; q < n; ++q) {
        if (queries[q].ray != cached_ray) {
            cached_ray = queries[q].ray;
            encode_view_direction(rays[cached_ray].direction, encoding, view_feature);
        }
        for (int i = 0; i < view_dim; ++i) views(i, q) = static_cast<Scalar>(view_feature[i]);
    }

    if (encoding.variant == EncodingVariant::ConcatPe) {
        std::vector<double> feature(in_dim);
        for (Eigen::Index q = 0; q < n; ++q) {
            const IntervalQuery& query = queries[q];
            encode_region(frustum_to_gaussian({rays[query.ray], query.t0, query.t1}, true), encoding, feature);
            for (int i = 0; i < in_dim; ++i) positions(i, q) = static_cast<Scalar>(feature[i]);
        }
        return;
    }

    // Same layout and formula as integrated_positional_encode, evaluated a whole
    // block at a time: arguments 2^j mu_i and exponents -4^j var_i / 2 per row.
    const int degree = encoding.degree;
    const bool point = encoding.variant == EncodingVariant::Pe;
    Array args(3 * degree, n);
    Array decay(3 * degree, n);
    for (Eigen::Index q = 0; q < n; ++q) {
        const IntervalQuery& query = queries[q];
        const Ray& ray = rays[query.ray];
        GaussianRegion region;
        if (point) {
            region.mean = ray.origin + 0.5 * (query.t0 + query.t1) * ray.direction;
        } else {
            region = frustum_to_gaussian({ray, query.t0, query.t1});
        }
        double scale = 1.0;
        double var_scale = 0.5;
        for (int j = 0; j < degree; ++j, scale *= 2.0, var_scale *= 4.0)
            for (int i = 0; i < 3; ++i) {
                args(j * 3 + i, q) = static_cast<Scalar>(scale * region.mean[i]);
                decay(j * 3 + i, q) = static_cast<Scalar>(-var_scale * region.cov_diag[i]);
            }
    }
    const int block = 3 * degree;
    if (point) {
        positions.topRows(block) = args.sin().matrix();
        positions.bottomRows(block) = args.cos().matrix();
    } else {
        const Array attenuation = decay.exp();
        positions.topRows(block) = (args.sin() * attenuation).matrix();
        positions.bottomRows(block) = (args.cos() * attenuation).matrix();
    }
}

template <typename Scalar>
void MlpEvaluator<Scalar>::operator()(Pass pass, std::span<const Ray> rays, std::span<const IntervalQuery> queries,
                                      std::span<double> tau, std::span<Vec3> rgb) {
    const int p = static_cast<int>(pass);
    const Mlp& mlp = (pass == Pass::Fine) ? model_->fine() : model_->coarse();

    typename Mlp::Matrix positions, views;
    featurize<Scalar>(model_->encoding, rays, queries, positions, views);
    typename Mlp::Output out;
    mlp.forward(positions, views, out, keep_cache_ ? &caches_[p] : nullptr);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        tau[q] = static_cast<double>(out.tau(q));
        rgb[q] = Vec3(out.rgb(0, q), out.rgb(1, q), out.rgb(2, q));
    }
}

template <typename Scalar>
void MlpEvaluator<Scalar>::backward(Pass pass, std::span<const double> d_tau, std::span<const Vec3> d_rgb,
                                    std::vector<std::vector<Scalar>>& grads) const {
    const int p = static_cast<int>(pass);
    const std::size_t index = (pass == Pass::Fine && model_->two_mlps()) ? 1 : 0;
    const Mlp& mlp = model_->mlps[index];
    const auto n = static_cast<Eigen::Index>(d_tau.size());
    typename Mlp::RowVector dt(n);
    typename Mlp::Matrix dc(3, n);
    for (Eigen::Index q = 0; q < n; ++q) {
        dt(q) = static_cast<Scalar>(d_tau[q]);
        for (int c = 0; c < 3; ++c) dc(c, q) = static_cast<Scalar>(d_rgb[q][c]);
    }
    mlp.backward(caches_[p], dt, dc, grads.at(index));
}

std::vector<Ray> pixel_rays(const Camera& camera, int row, int col, int supersample, CounterRng& rng) {
    if (supersample < 1) throw std::invalid_argument("supersample must be >= 1");
    if (supersample == 1) return {pixel_cone(camera, row, col)};
    std::vector<Ray> rays;
    rays.reserve(supersample);
    const double radius_scale = 1.0 / std::sqrt(static_cast<double>(supersample));
    for (int s = 0; s < supersample; ++s) {
        const double sx = rng.uniform();
        const double sy = rng.uniform();
        rays.push_back(pixel_cone(camera, row, col, sx, sy, radius_scale));
    }
    return rays;
}

std::uint64_t pixel_key(std::uint64_t seed, std::uint64_t index) { return hash_combine(mix64(seed), index); }

namespace {

constexpr std::uint64_t kJitterStream = 0x5175ULL;

// Rays of a run of pixels plus their stream keys; pixel p owns rays [p*k, (p+1)*k).
void gather_pixel_rays(const Camera& camera, int supersample, std::uint64_t seed, std::size_t first, std::size_t count,
                       std::vector<Ray>& rays, std::vector<std::uint64_t>& keys) {
    rays.clear();
    keys.clear();
    for (std::size_t p = first; p < first + count; ++p) {
        const int row = static_cast<int>(p / camera.width);
        const int col = static_cast<int>(p % camera.width);
        const std::uint64_t key = pixel_key(seed, p);
        CounterRng jitter(key, kJitterStream);
        for (const Ray& r : pixel_rays(camera, row, col, supersample, jitter)) rays.push_back(r);
        for (int s = 0; s < supersample; ++s) keys.push_back(hash_combine(key, static_cast<std::uint64_t>(s)));
    }
}

}  // namespace

PixelColor render_pixel(const PassEvaluator& evaluate, const Camera& camera, int row, int col,
                        const RenderConfig& config, std::uint64_t seed) {
    config.validate();
    if (row < 0 || row >= camera.height || col < 0 || col >= camera.width)
        throw std::out_of_range("render_pixel: pixel outside image");
    std::vector<Ray> rays;
    std::vector<std::uint64_t> keys;
    const std::size_t index = static_cast<std::size_t>(row) * camera.width + col;
    gather_pixel_rays(camera, config.supersample, seed, index, 1, rays, keys);
    const HierarchyResult h = render_hierarchy(rays, keys, config, evaluate);

    PixelColor out;
    for (std::size_t r = 0; r < rays.size(); ++r) {
        out.coarse += h.coarse.composites[r].color;
        out.fine += h.fine.composites[r].color;
    }
    out.coarse /= static_cast<double>(rays.size());
    out.fine /= static_cast<double>(rays.size());
    return out;
}

RenderedImage render_image(const RadianceModel<float>& model, const Camera& camera, const RenderConfig& config,
                           std::uint64_t seed) {
    camera.validate();
    config.validate();
    constexpr std::size_t kChunkPixels = 64;
    const std::size_t n_pixels = static_cast<std::size_t>(camera.width) * camera.height;
    const std::size_t n_chunks = (n_pixels + kChunkPixels - 1) / kChunkPixels;

    RenderedImage image;
    image.width = camera.width;
    image.height = camera.height;
    image.coarse.assign(n_pixels, Vec3::Zero());
    image.fine.assign(n_pixels, Vec3::Zero());

    parallel_for(n_chunks, [&](std::size_t chunk) {
        const std::size_t first = chunk * kChunkPixels;
        const std::size_t count = std::min(kChunkPixels, n_pixels - first);
        std::vector<Ray> rays;
        std::vector<std::uint64_t> keys;
        gather_pixel_rays(camera, config.supersample, seed, first, count, rays, keys);

        MlpEvaluator<float> evaluator(model, false);
        const HierarchyResult h = render_hierarchy(rays, keys, config, evaluator.as_function());
        const int k = config.supersample;
        for (std::size_t p = 0; p < count; ++p) {
            Vec3 c = Vec3::Zero(), f = Vec3::Zero();
            for (int s = 0; s < k; ++s) {
                c += h.coarse.composites[p * k + s].color;
                f += h.fine.composites[p * k + s].color;
            }
            image.coarse[first + p] = c / k;
            image.fine[first + p] = f / k;
        }
    });
    return image;
}

template void featurize<float>(const EncodingConfig&, std::span<const Ray>, std::span<const IntervalQuery>,
                               Eigen::MatrixXf&, Eigen::MatrixXf&);
template void featurize<double>(const EncodingConfig&, std::span<const Ray>, std::span<const IntervalQuery>,
                                Eigen::MatrixXd&, Eigen::MatrixXd&);
template class MlpEvaluator<float>;
template class MlpEvaluator<double>;

}  // namespace mipnerf

#include "mipnerf/trainer.hpp"

#include "mipnerf/checkpoint.hpp"
#include "mipnerf/config.hpp"
#include "mipnerf/parallel.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace mipnerf {

namespace {

constexpr std::uint64_t kBatchStream = 0xBA7C4ULL;
constexpr std::uint64_t kJitterStream = 0x717E5ULL;
constexpr std::size_t kChunkPixels = 32;

int scale_slot(int factor) {
    for (std::size_t i = 0; i < kScaleFactors.size(); ++i)
        if (kScaleFactors[i] == factor) return static_cast<int>(i);
    throw std::invalid_argument("unsupported scale factor " + std::to_string(factor));
}

}  // namespace

void TrainConfig::validate() const {
    if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
    if (batch_rays < 1) throw std::invalid_argument("batch_rays must be >= 1");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (!(lr_init > lr_final) || !(lr_final > 0.0)) throw std::invalid_argument("need lr_init > lr_final > 0");
    if (warmup_steps < 0 || (iterations > 0 && warmup_steps > iterations))
        throw std::invalid_argument("warmup_steps must be in [0, iterations]");
    if (!(warmup_factor >= 0.0 && warmup_factor <= 1.0)) throw std::invalid_argument("warmup_factor must be in [0, 1]");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0))
        throw std::invalid_argument("invalid Adam constants");
    if (supersample_train_k < 1) throw std::invalid_argument("supersample_train_k must be >= 1");
    if (eval_every < 0) throw std::invalid_argument("eval_every must be >= 0");
    if (two_mlps && n_coarse < 2) throw std::invalid_argument("two_mlps needs n_coarse >= 2");
    encoding_config().validate();
    render_config(true).validate();
}

EncodingConfig TrainConfig::encoding_config() const {
    EncodingConfig e;
    e.degree = degree;
    e.view_degree = view_degree;
    e.variant = no_ipe ? EncodingVariant::Pe : parse_encoding_variant(encoding);
    return e;
}

RenderConfig TrainConfig::render_config(bool randomized) const {
    RenderConfig r;
    r.n_coarse = two_mlps ? n_coarse / 2 : n_coarse;
    r.n_fine = n_fine;
    r.alpha = alpha;
    r.t_near = 2.0;
    r.t_far = 6.0;
    r.white_background = white_background;
    r.randomized = randomized;
    r.union_fine = two_mlps;
    return r;
}

double TrainConfig::loss_lambda() const { return two_mlps ? 1.0 : lambda; }

double learning_rate(int iteration, const TrainConfig& config) {
    const double n = std::max(1, config.iterations);
    const double progress = std::clamp(iteration / n, 0.0, 1.0);
    double warm = 1.0;
    if (config.warmup_steps > 0) {
        const double ramp = std::clamp(static_cast<double>(iteration) / config.warmup_steps, 0.0, 1.0);
        warm = config.warmup_factor + (1.0 - config.warmup_factor) * std::sin(0.5 * std::numbers::pi * ramp);
    }
    const double decayed =
        std::exp((1.0 - progress) * std::log(config.lr_init) + progress * std::log(config.lr_final));
    return warm * decayed;
}

template <typename Scalar>
LossResult<Scalar> batch_loss(const RadianceModel<Scalar>& model, const RayBatch& batch, const RenderConfig& render,
                              double lambda, bool with_gradient, const std::vector<std::vector<double>>* frozen_fine,
                              std::vector<std::vector<double>>* fine_samples) {
    const std::size_t pixels = batch.pixel_count();
    const int k = batch.supersample;
    if (pixels == 0) throw std::invalid_argument("batch_loss: empty batch");
    if (k < 1 || batch.rays.size() != pixels * k || batch.keys.size() != batch.rays.size() ||
        batch.weights.size() != pixels)
        throw std::invalid_argument("batch_loss: inconsistent batch");
    if (frozen_fine && frozen_fine->size() != batch.rays.size())
        throw std::invalid_argument("batch_loss: frozen samples must cover every ray");

    struct ChunkResult {
        double loss = 0.0, coarse = 0.0, fine = 0.0;
        std::vector<std::vector<Scalar>> grads;
        std::vector<std::vector<double>> fine_t;
    };
    const std::size_t chunks = (pixels + kChunkPixels - 1) / kChunkPixels;
    std::vector<ChunkResult> results(chunks);
    const double inv_pixels = 1.0 / static_cast<double>(pixels);

    parallel_for(chunks, [&](std::size_t chunk) {
        const std::size_t p0 = chunk * kChunkPixels;
        const std::size_t np = std::min(kChunkPixels, pixels - p0);
        const std::size_t r0 = p0 * k;
        const std::size_t nr = np * k;
        const std::span<const Ray> rays(batch.rays.data() + r0, nr);
        const std::span<const std::uint64_t> keys(batch.keys.data() + r0, nr);
        std::vector<std::vector<double>> frozen;
        if (frozen_fine) frozen.assign(frozen_fine->begin() + r0, frozen_fine->begin() + r0 + nr);

        MlpEvaluator<Scalar> evaluator(model, with_gradient);
        const HierarchyResult h =
            render_hierarchy(rays, keys, render, evaluator.as_function(), frozen_fine ? &frozen : nullptr);

        ChunkResult& out = results[chunk];
        std::vector<Vec3> d_coarse(nr), d_fine(nr);
        for (std::size_t p = 0; p < np; ++p) {
            Vec3 cc = Vec3::Zero(), cf = Vec3::Zero();
            for (int s = 0; s < k; ++s) {
                cc += h.coarse.composites[p * k + s].color;
                cf += h.fine.composites[p * k + s].color;
            }
            const Vec3 ec = cc / k - batch.targets[p0 + p];
            const Vec3 ef = cf / k - batch.targets[p0 + p];
            const double a = batch.weights[p0 + p];
            out.coarse += a * ec.squaredNorm() * inv_pixels;
            out.fine += a * ef.squaredNorm() * inv_pixels;
            for (int s = 0; s < k; ++s) {
                d_coarse[p * k + s] = (2.0 * a * lambda * inv_pixels / k) * ec;
                d_fine[p * k + s] = (2.0 * a * inv_pixels / k) * ef;
            }
        }
        out.loss = lambda * out.coarse + out.fine;
        if (fine_samples)
            for (std::size_t r = 0; r < nr; ++r) {
                const auto t = h.fine.ray_t(r);
                out.fine_t.emplace_back(t.begin(), t.end());
            }
        if (!with_gradient) return;

        out.grads.resize(model.mlps.size());
        for (std::size_t m = 0; m < model.mlps.size(); ++m) out.grads[m].assign(model.mlps[m].parameter_count(), 0);
        const std::pair<const PassRecord*, Pass> passes[] = {{&h.coarse, Pass::Coarse}, {&h.fine, Pass::Fine}};
        for (const auto& [rec, pass] : passes) {
            if (pass == Pass::Coarse && lambda == 0.0) continue;
            const auto& upstream = (pass == Pass::Coarse) ? d_coarse : d_fine;
            std::vector<double> d_tau(rec->tau.size());
            std::vector<Vec3> d_rgb(rec->rgb.size());
            for (std::size_t r = 0; r < nr; ++r) {
                const std::size_t q0 = rec->query_begin(r);
                const std::size_t n = rec->interval_count(r);
                composite_backward(std::span<const double>(rec->tau).subspan(q0, n),
                                   std::span<const Vec3>(rec->rgb).subspan(q0, n), rec->ray_t(r), rec->composites[r],
                                   upstream[r], render.white_background,
                                   std::span<double>(d_tau).subspan(q0, n), std::span<Vec3>(d_rgb).subspan(q0, n));
            }
            evaluator.backward(pass, d_tau, d_rgb, out.grads);
        }
    });

    LossResult<Scalar> total;
    if (with_gradient) {
        total.grads.resize(model.mlps.size());
        for (std::size_t m = 0; m < model.mlps.size(); ++m) total.grads[m].assign(model.mlps[m].parameter_count(), 0);
    }
    for (ChunkResult& r : results) {
        total.loss += r.loss;
        total.loss_coarse += r.coarse;
        total.loss_fine += r.fine;
        if (with_gradient)
            for (std::size_t m = 0; m < total.grads.size(); ++m)
                for (std::size_t i = 0; i < total.grads[m].size(); ++i) total.grads[m][i] += r.grads[m][i];
        if (fine_samples)
            for (auto& t : r.fine_t) fine_samples->push_back(std::move(t));
    }
    if (!std::isfinite(total.loss))
        throw std::runtime_error("non-finite loss (coarse " + std::to_string(total.loss_coarse) + ", fine " +
                                 std::to_string(total.loss_fine) + ") over " + std::to_string(pixels) + " pixels");
    return total;
}

void adam_step(RadianceModel<float>& model, AdamState& state, const std::vector<std::vector<float>>& grads,
               double lr, const TrainConfig& config) {
    if (grads.size() != model.mlps.size()) throw std::invalid_argument("adam_step: one gradient buffer per MLP");
    if (state.m.empty()) {
        for (const auto& mlp : model.mlps) {
            state.m.emplace_back(mlp.parameter_count(), 0.0f);
            state.v.emplace_back(mlp.parameter_count(), 0.0f);
        }
    }
    ++state.step;
    const double b1 = config.adam_beta1, b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, state.step);
    const double c2 = 1.0 - std::pow(b2, state.step);
    for (std::size_t m = 0; m < model.mlps.size(); ++m) {
        auto params = model.mlps[m].parameters();
        const auto& g = grads[m];
        auto& mm = state.m[m];
        auto& vv = state.v[m];
        for (std::size_t i = 0; i < params.size(); ++i) {
            mm[i] = static_cast<float>(b1 * mm[i] + (1.0 - b1) * g[i]);
            vv[i] = static_cast<float>(b2 * vv[i] + (1.0 - b2) * g[i] * g[i]);
            const double m_hat = mm[i] / c1;
            const double v_hat = vv[i] / c2;
            params[i] = static_cast<float>(params[i] - lr * m_hat / (std::sqrt(v_hat) + config.adam_eps));
            if (!std::isfinite(params[i]))
                throw std::runtime_error("parameter " + std::to_string(i) + " of MLP " + std::to_string(m) +
                                         " became non-finite at step " + std::to_string(state.step));
        }
    }
}

PixelTable::PixelTable(const MultiscaleDataset& data) : data_(&data) {
    for (const auto& v : data.views) {
        offsets_.push_back(total_);
        total_ += v.image.pixels.size();
    }
    if (total_ == 0) throw std::invalid_argument("dataset has no pixels");
}

void PixelTable::locate(std::size_t index, std::size_t& view, int& row, int& col) const {
    if (index >= total_) throw std::out_of_range("pixel index out of range");
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
    view = static_cast<std::size_t>(it - offsets_.begin()) - 1;
    const std::size_t local = index - offsets_[view];
    const int width = data_->views[view].image.width;
    row = static_cast<int>(local / width);
    col = static_cast<int>(local % width);
}

RayBatch make_batch(const MultiscaleDataset& data, const PixelTable& table, const TrainConfig& config,
                    int iteration, std::vector<std::size_t>* per_scale_counts) {
    const int k = config.supersample_train_k;
    CounterRng rng(config.seed, kBatchStream, static_cast<std::uint64_t>(iteration));
    std::uniform_int_distribution<std::size_t> pick(0, table.size() - 1);
    const std::uint64_t iter_key = hash_combine(mix64(config.seed), static_cast<std::uint64_t>(iteration));

    RayBatch batch;
    batch.supersample = k;
    batch.rays.reserve(static_cast<std::size_t>(config.batch_rays) * k);
    for (int p = 0; p < config.batch_rays; ++p) {
        std::size_t view;
        int row, col;
        table.locate(pick(rng), view, row, col);
        const ScaledView& v = data.views[view];
        const std::uint64_t pixel_key = hash_combine(iter_key, static_cast<std::uint64_t>(p));
        CounterRng jitter(pixel_key, kJitterStream);
        for (const Ray& r : pixel_rays(v.camera, row, col, k, jitter)) batch.rays.push_back(r);
        for (int s = 0; s < k; ++s) batch.keys.push_back(hash_combine(pixel_key, static_cast<std::uint64_t>(s)));
        batch.targets.push_back(v.image.at(row, col));
        batch.weights.push_back(config.no_area_loss ? 1.0 : v.weight);
        if (per_scale_counts) ++(*per_scale_counts)[scale_slot(v.factor)];
    }
    return batch;
}

namespace {

Image to_image(const std::vector<Vec3>& colors, int width, int height) {
    Image img(width, height);
    for (std::size_t p = 0; p < colors.size(); ++p) img.pixels[p] = colors[p].cwiseMax(0.0).cwiseMin(1.0);
    return img;
}

}  // namespace

std::vector<MetricRow> evaluate(const RadianceModel<float>& model, const MultiscaleDataset& test,
                                const TrainConfig& config, const EvalOptions& options,
                                std::vector<std::vector<Image>>* renders) {
    RenderConfig render = config.render_config(false);
    render.supersample = options.supersample;
    std::vector<MetricRow> rows;
    if (renders) renders->assign(kScaleFactors.size(), {});
    for (std::size_t s = 0; s < kScaleFactors.size(); ++s) {
        const auto views = test.at_scale(kScaleFactors[s]);
        if (views.empty()) continue;
        double psnr_sum = 0.0, ssim_sum = 0.0;
        for (const ScaledView* v : views) {
            const std::uint64_t seed = hash_combine(options.seed, static_cast<std::uint64_t>(v->source * 16 + s));
            const RenderedImage r = render_image(model, v->camera, render, seed);
            const Image img = to_image(r.fine, r.width, r.height);
            psnr_sum += psnr(img, v->image);
            ssim_sum += ssim(img, v->image);
            if (renders) (*renders)[s].push_back(img);
        }
        MetricRow row;
        row.scene = options.scene;
        row.scale = kScaleFactors[s];
        row.method = options.method;
        row.psnr = psnr_sum / views.size();
        row.ssim = ssim_sum / views.size();
        row.avg2 = average_metric(row.psnr, std::min(row.ssim, 1.0));
        rows.push_back(row);
    }
    return rows;
}

RadianceModel<float> make_model(const TrainConfig& config) {
    const EncodingConfig enc = config.encoding_config();
    return RadianceModel<float>::create(enc, layout_for(enc, config.depth, config.width, config.paper_scale),
                                        config.two_mlps, config.seed);
}

TrainResult train(const MultiscaleDataset& data, const MultiscaleDataset* test, const TrainConfig& config,
                  const ProgressFn& progress) {
    config.validate();
    TrainResult result;
    result.model = make_model(config);
    const PixelTable table(data);
    const RenderConfig render = config.render_config(true);
    const double lambda = config.loss_lambda();
    AdamState adam;
    std::vector<std::size_t> counts(kScaleFactors.size(), 0);
    const auto start = std::chrono::steady_clock::now();

    for (int it = 0; it < config.iterations; ++it) {
        const RayBatch batch = make_batch(data, table, config, it, &counts);
        const LossResult<float> loss = batch_loss(result.model, batch, render, lambda, true);
        const double lr = learning_rate(it, config);
        adam_step(result.model, adam, loss.grads, lr, config);

        const TrainLogRow row{it, loss.loss_coarse, loss.loss_fine, lr};
        result.log.push_back(row);
        result.wall_ms.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
        if (progress) progress(row);
        if (test && config.eval_every > 0 && (it + 1) % config.eval_every == 0) {
            EvalOptions opts;
            opts.seed = config.seed;
            result.evals.emplace_back(it + 1, evaluate(result.model, *test, config, opts));
        }
    }
    for (std::size_t s = 0; s < counts.size(); ++s) result.scale_counts[s] = counts[s];
    return result;
}

void write_train_log(std::ostream& out, const std::vector<TrainLogRow>& log) {
    out << "iter,loss_coarse,loss_fine,lr\n";
    char buf[128];
    for (const TrainLogRow& r : log) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", r.iteration, r.loss_coarse, r.loss_fine, r.lr);
        out << buf;
    }
}

void write_train_outputs(const std::filesystem::path& out, const TrainResult& result, const TrainConfig& config,
                         const std::string& scene) {
    std::filesystem::create_directories(out);
    save_checkpoint(out / "checkpoint.bin", result.model);
    {
        std::ofstream log(out / "train_log.csv");
        write_train_log(log, result.log);
        if (!log) throw std::runtime_error("failed to write train_log.csv");
    }
    {
        std::ofstream timing(out / "timing.csv");
        timing << "iter,wall_ms\n";
        for (std::size_t i = 0; i < result.wall_ms.size(); ++i)
            timing << result.log[i].iteration << ',' << result.wall_ms[i] << '\n';
    }
    if (!result.evals.empty()) {
        std::ofstream metrics(out / "metrics.csv");
        metrics << "iter,";
        write_metric_csv_header(metrics);
        for (const auto& [iter, rows] : result.evals)
            for (const MetricRow& r : rows) {
                metrics << iter << ',';
                write_metric_csv_row(metrics, r);
            }
    }
    nlohmann::ordered_json manifest;
    manifest["command"] = "train";
    manifest["scene"] = scene;
    manifest["seed"] = config.seed;
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : config_entries(config)) cfg[k] = v;
    manifest["config"] = cfg;
    manifest["parameter_count"] = result.model.parameter_count();
    nlohmann::ordered_json counts;
    for (std::size_t s = 0; s < kScaleFactors.size(); ++s)
        counts[std::to_string(kScaleFactors[s])] = result.scale_counts[s];
    manifest["pixels_per_scale"] = counts;
    manifest["artifacts"] = {"checkpoint.bin", "checkpoint.bin.json", "train_log.csv", "timing.csv"};
    if (!result.evals.empty()) manifest["artifacts"].push_back("metrics.csv");
    std::ofstream m(out / "manifest.json");
    m << manifest.dump(2) << '\n';
    if (!m) throw std::runtime_error("failed to write manifest.json");
}

template LossResult<float> batch_loss<float>(const RadianceModel<float>&, const RayBatch&, const RenderConfig&,
                                             double, bool, const std::vector<std::vector<double>>*,
                                             std::vector<std::vector<double>>*);
template LossResult<double> batch_loss<double>(const RadianceModel<double>&, const RayBatch&, const RenderConfig&,
                                               double, bool, const std::vector<std::vector<double>>*,
                                               std::vector<std::vector<double>>*);

}  // namespace mipnerf

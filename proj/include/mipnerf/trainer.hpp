#pragma once

#include "mipnerf/dataset.hpp"
#include "mipnerf/field.hpp"
#include "mipnerf/metrics.hpp"
#include "mipnerf/renderer.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace mipnerf {

struct TrainConfig {
    int iterations = 25000;
    int batch_rays = 4096;
    double lambda = 0.1;  // coarse loss weight
    double lr_init = 5e-4;
    double lr_final = 5e-6;
    int warmup_steps = 2500;
    double warmup_factor = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    // Field and sampling.
    int degree = 16;
    int view_degree = 4;
    std::string encoding = "ipe";  // pe, ipe, concat_pe
    int depth = 4;
    int width = 64;
    bool paper_scale = false;
    int n_coarse = 128;
    int n_fine = 128;
    double alpha = 0.01;
    bool white_background = true;

    // Ablations.
    bool no_ipe = false;
    bool two_mlps = false;
    bool no_area_loss = false;
    int supersample_train_k = 1;

    int eval_every = 2500;  // 0 disables periodic evaluation

    void validate() const;

    /// no_ipe switches the encoding to midpoint PE at the same degree.
    EncodingConfig encoding_config() const;
    /// two_mlps halves the coarse sample count and unions coarse and fine t's.
    RenderConfig render_config(bool randomized) const;
    /// Coarse loss weight: lambda, or 1 for the two-MLP objective.
    double loss_lambda() const;
};

/// Warmup factor times log-linear decay from lr_init to lr_final.
double learning_rate(int iteration, const TrainConfig& config);

/// Rays of a training batch. Pixel p owns rays [p * supersample, (p + 1) * supersample).
struct RayBatch {
    std::vector<Ray> rays;
    std::vector<std::uint64_t> keys;
    std::vector<Vec3> targets;
    std::vector<double> weights;  // per pixel area weight
    int supersample = 1;

    std::size_t pixel_count() const { return targets.size(); }
};

template <typename Scalar>
struct LossResult {
    double loss = 0.0;         // mean over pixels of a * (lambda |e_coarse|^2 + |e_fine|^2)
    double loss_coarse = 0.0;  // mean over pixels of a * |e_coarse|^2
    double loss_fine = 0.0;    // mean over pixels of a * |e_fine|^2
    std::vector<std::vector<Scalar>> grads;  // one buffer per MLP
};

/// Loss of a batch and (optionally) its exact gradient. `frozen_fine` holds the
/// fine-pass t's fixed (see render_hierarchy); `fine_samples` receives them.
/// Throws std::runtime_error if the loss is not finite.
template <typename Scalar>
LossResult<Scalar> batch_loss(const RadianceModel<Scalar>& model, const RayBatch& batch, const RenderConfig& render,
                              double lambda, bool with_gradient,
                              const std::vector<std::vector<double>>* frozen_fine = nullptr,
                              std::vector<std::vector<double>>* fine_samples = nullptr);

struct AdamState {
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
    int step = 0;
};

/// One bias-corrected Adam update of every MLP with learning rate lr.
void adam_step(RadianceModel<float>& model, AdamState& state, const std::vector<std::vector<float>>& grads,
               double lr, const TrainConfig& config);

/// Index of every pixel of a multiscale dataset, in view order.
class PixelTable {
  public:
    explicit PixelTable(const MultiscaleDataset& data);
    std::size_t size() const { return total_; }
    /// (view index, row, col) of a global pixel index.
    void locate(std::size_t index, std::size_t& view, int& row, int& col) const;

  private:
    const MultiscaleDataset* data_;
    std::vector<std::size_t> offsets_;
    std::size_t total_ = 0;
};

/// Training batch for one iteration: pixels uniform over all scales.
RayBatch make_batch(const MultiscaleDataset& data, const PixelTable& table, const TrainConfig& config,
                    int iteration, std::vector<std::size_t>* per_scale_counts = nullptr);

struct TrainLogRow {
    int iteration = 0;
    double loss_coarse = 0.0;
    double loss_fine = 0.0;
    double lr = 0.0;
};

struct EvalOptions {
    std::string scene = "three-spheres";
    std::string method = "mip";
    int supersample = 1;
    std::uint64_t seed = 0;
};

/// Renders every test view at every scale and averages PSNR / SSIM per scale.
/// Rendering is deterministic (stratified midpoints). Rows are ordered by scale.
std::vector<MetricRow> evaluate(const RadianceModel<float>& model, const MultiscaleDataset& test,
                                const TrainConfig& config, const EvalOptions& options,
                                std::vector<std::vector<Image>>* renders = nullptr);

RadianceModel<float> make_model(const TrainConfig& config);

struct TrainResult {
    RadianceModel<float> model;
    std::vector<TrainLogRow> log;
    std::vector<double> wall_ms;                 // cumulative per logged iteration
    std::array<std::size_t, 4> scale_counts{};   // pixels drawn per factor 1, 2, 4, 8
    std::vector<std::pair<int, std::vector<MetricRow>>> evals;
};

using ProgressFn = std::function<void(const TrainLogRow&)>;

/// Runs the optimization in memory. `test` may be null (no periodic evaluation).
TrainResult train(const MultiscaleDataset& data, const MultiscaleDataset* test, const TrainConfig& config,
                  const ProgressFn& progress = nullptr);

/// Writes checkpoint.bin (+ .json), train_log.csv, timing.csv, metrics.csv (when
/// evaluations ran) and manifest.json into `out`.
void write_train_outputs(const std::filesystem::path& out, const TrainResult& result, const TrainConfig& config,
                         const std::string& scene);

void write_train_log(std::ostream& out, const std::vector<TrainLogRow>& log);

extern template LossResult<float> batch_loss<float>(const RadianceModel<float>&, const RayBatch&, const RenderConfig&,
                                                    double, bool, const std::vector<std::vector<double>>*,
                                                    std::vector<std::vector<double>>*);
extern template LossResult<double> batch_loss<double>(const RadianceModel<double>&, const RayBatch&,
                                                      const RenderConfig&, double, bool,
                                                      const std::vector<std::vector<double>>*,
                                                      std::vector<std::vector<double>>*);

}  // namespace mipnerf

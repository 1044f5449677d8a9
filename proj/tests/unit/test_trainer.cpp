#include "mipnerf/dataset.hpp"
#include "mipnerf/oracle.hpp"
#include "mipnerf/parallel.hpp"
#include "mipnerf/trainer.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace mipnerf;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.iterations = 20;
    c.batch_rays = 16;
    c.warmup_steps = 5;
    c.degree = 6;
    c.depth = 2;
    c.width = 16;
    c.n_coarse = 8;
    c.n_fine = 8;
    c.eval_every = 0;
    return c;
}

const MultiscaleDataset& tiny_data() {
    static const MultiscaleDataset data = [] {
        CameraRig rig = default_rig(16, 16);
        rig.train.resize(4);
        std::vector<Image> images;
        for (const Camera& c : rig.train) images.push_back(generate_scene(SceneSpec::three_spheres(), c, 2));
        return build_multiscale(images, rig.train);
    }();
    return data;
}

RayBatch tiny_batch(const TrainConfig& config, int iteration = 0) {
    const PixelTable table(tiny_data());
    return make_batch(tiny_data(), table, config, iteration);
}

template <typename Scalar>
void set_slice(RadianceMlp<Scalar>& mlp, const std::string& name, double weight, double bias) {
    for (const DenseSlice& s : mlp.slices()) {
        if (s.name != name) continue;
        auto p = mlp.parameters();
        for (std::size_t i = s.offset; i < s.bias_offset(); ++i) p[i] = static_cast<Scalar>(weight);
        for (std::size_t i = s.bias_offset(); i < s.offset + s.size(); ++i) p[i] = static_cast<Scalar>(bias);
    }
}

}  // namespace

TEST(LearningRate, ScheduleEndpoints) {
    TrainConfig c;
    EXPECT_NEAR(learning_rate(0, c), 0.01 * 5e-4, 1e-18);
    EXPECT_NEAR(learning_rate(c.iterations, c), 5e-6, 1e-18);
    const double decay_only = std::exp((1.0 - 0.1) * std::log(5e-4) + 0.1 * std::log(5e-6));
    EXPECT_DOUBLE_EQ(learning_rate(c.warmup_steps, c), decay_only);
}

TEST(LearningRate, WarmupRisesThenDecays) {
    TrainConfig c;
    double previous = 0.0;
    for (int i = 0; i <= c.warmup_steps / 2; i += 50) {
        const double lr = learning_rate(i, c);
        EXPECT_GT(lr, previous);
        previous = lr;
    }
    for (int i = c.warmup_steps; i < c.iterations; i += 500) EXPECT_GT(learning_rate(i, c), learning_rate(i + 500, c));
}

TEST(Adam, MatchesScalarReference) {
    TrainConfig config = tiny_config();
    RadianceModel<float> model = make_model(config);
    AdamState state;
    std::vector<double> p(model.mlps[0].parameters().begin(), model.mlps[0].parameters().end());
    std::vector<double> m(p.size(), 0.0), v(p.size(), 0.0);
    CounterRng rng(3);
    for (int step = 1; step <= 5; ++step) {
        std::vector<std::vector<float>> grads(1, std::vector<float>(p.size()));
        for (float& g : grads[0]) g = static_cast<float>(rng.uniform() - 0.5);
        const double lr = 1e-3 * step;
        adam_step(model, state, grads, lr, config);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = grads[0][i];
            m[i] = static_cast<float>(0.9 * m[i] + 0.1 * g);
            v[i] = static_cast<float>(0.999 * v[i] + 0.001 * g * g);
            const double mh = m[i] / (1 - std::pow(0.9, step));
            const double vh = v[i] / (1 - std::pow(0.999, step));
            p[i] = static_cast<float>(p[i] - lr * mh / (std::sqrt(vh) + 1e-8));
        }
    }
    const auto got = model.mlps[0].parameters();
    for (std::size_t i = 0; i < p.size(); ++i)
        EXPECT_LE(std::abs(got[i] - p[i]), 1e-7 * std::max(1.0, std::abs(p[i])));
}

TEST(BatchLoss, PerfectPredictorHasZeroLossAndGradient) {
    TrainConfig config = tiny_config();
    config.white_background = false;
    RadianceModel<double> model = make_model(config).cast<double>();
    set_slice(model.mlps[0], "density", 0.0, -1e3);  // empty space, so every pixel renders black
    RayBatch batch = tiny_batch(config);
    for (Vec3& t : batch.targets) t = Vec3::Zero();
    const auto loss = batch_loss(model, batch, config.render_config(true), 0.1, true);
    EXPECT_EQ(loss.loss, 0.0);
    for (double g : loss.grads[0]) EXPECT_EQ(g, 0.0);
}

TEST(BatchLoss, LossIsAreaWeightedMean) {
    TrainConfig config = tiny_config();
    const RadianceModel<double> model = make_model(config).cast<double>();
    const RayBatch batch = tiny_batch(config);
    const RenderConfig render = config.render_config(false);
    const auto loss = batch_loss(model, batch, render, 0.1, false);
    EXPECT_NEAR(loss.loss, 0.1 * loss.loss_coarse + loss.loss_fine, 1e-15);

    MlpEvaluator<double> eval(model, false);
    const HierarchyResult h = render_hierarchy(batch.rays, batch.keys, render, eval.as_function());
    double fine = 0.0;
    for (std::size_t p = 0; p < batch.pixel_count(); ++p)
        fine += batch.weights[p] * (h.fine.composites[p].color - batch.targets[p]).squaredNorm();
    EXPECT_NEAR(loss.loss_fine, fine / batch.pixel_count(), 1e-12);
}

TEST(BatchLoss, DoublingAreaWeightsDoublesEverything) {
    TrainConfig config = tiny_config();
    const RadianceModel<double> model = make_model(config).cast<double>();
    RayBatch batch = tiny_batch(config);
    const RenderConfig render = config.render_config(true);
    const auto a = batch_loss(model, batch, render, 0.1, true);
    for (double& w : batch.weights) w *= 2;
    const auto b = batch_loss(model, batch, render, 0.1, true);
    EXPECT_EQ(b.loss, 2 * a.loss);
    for (std::size_t i = 0; i < a.grads[0].size(); ++i) EXPECT_EQ(b.grads[0][i], 2 * a.grads[0][i]);
}

TEST(BatchLoss, ZeroLambdaDropsCoarseGradients) {
    TrainConfig config = tiny_config();
    config.two_mlps = true;
    const RadianceModel<double> model = make_model(config).cast<double>();
    const RayBatch batch = tiny_batch(config);
    const RenderConfig render = config.render_config(true);
    const auto with = batch_loss(model, batch, render, 1.0, true);
    const auto without = batch_loss(model, batch, render, 0.0, true);
    ASSERT_EQ(without.grads.size(), 2u);
    double coarse_norm = 0.0;
    for (double g : with.grads[0]) coarse_norm += std::abs(g);
    EXPECT_GT(coarse_norm, 0.0);
    for (double g : without.grads[0]) EXPECT_EQ(g, 0.0);
    EXPECT_EQ(with.grads[1], without.grads[1]);
    // The coarse pass still places the fine samples.
    EXPECT_EQ(without.loss_fine, with.loss_fine);
}

TEST(BatchLoss, SingleMlpSharesOneBuffer) {
    TrainConfig config = tiny_config();
    const RadianceModel<double> model = make_model(config).cast<double>();
    const RayBatch batch = tiny_batch(config);
    const RenderConfig render = config.render_config(true);
    const auto a = batch_loss(model, batch, render, 0.1, true);
    const auto b = batch_loss(model, batch, render, 0.0, true);
    ASSERT_EQ(a.grads.size(), 1u);
    EXPECT_NE(a.grads[0], b.grads[0]);
}

TEST(BatchLoss, IndependentOfThreadCount) {
    TrainConfig config = tiny_config();
    config.batch_rays = 80;
    const RadianceModel<float> model = make_model(config);
    const RayBatch batch = tiny_batch(config);
    const RenderConfig render = config.render_config(true);
    set_thread_count(1);
    const auto a = batch_loss(model, batch, render, 0.1, true);
    set_thread_count(3);
    const auto b = batch_loss(model, batch, render, 0.1, true);
    set_thread_count(0);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.grads, b.grads);
}

TEST(MakeBatch, UniformOverAllPixels) {
    TrainConfig config = tiny_config();
    config.batch_rays = 2000;
    const PixelTable table(tiny_data());
    std::vector<std::size_t> counts(4, 0);
    for (int it = 0; it < 10; ++it) make_batch(tiny_data(), table, config, it, &counts);
    std::vector<double> observed, expected;
    const double total = 20000.0;
    for (std::size_t s = 0; s < 4; ++s) {
        observed.push_back(static_cast<double>(counts[s]));
        double pixels = 0;
        for (const ScaledView* v : tiny_data().at_scale(kScaleFactors[s])) pixels += v->image.pixels.size();
        expected.push_back(total * pixels / table.size());
    }
    EXPECT_GT(chi_squared_goodness(observed, expected).p_value, 1e-3);
}

TEST(MakeBatch, AreaWeightsFollowScale) {
    TrainConfig config = tiny_config();
    config.batch_rays = 500;
    const RayBatch batch = tiny_batch(config);
    bool saw_eighth = false;
    for (double w : batch.weights) {
        EXPECT_TRUE(w == 1 || w == 4 || w == 16 || w == 64);
        saw_eighth |= w == 64;
    }
    EXPECT_TRUE(saw_eighth);
    config.no_area_loss = true;
    for (double w : tiny_batch(config).weights) EXPECT_EQ(w, 1.0);
}

TEST(Train, ZeroIterationsKeepsInitialization) {
    TrainConfig config = tiny_config();
    config.iterations = 0;
    config.warmup_steps = 0;
    const TrainResult r = train(tiny_data(), nullptr, config);
    const RadianceModel<float> init = make_model(config);
    EXPECT_TRUE(r.log.empty());
    EXPECT_TRUE(std::equal(init.mlps[0].parameters().begin(), init.mlps[0].parameters().end(),
                           r.model.mlps[0].parameters().begin()));
}

TEST(Train, SameSeedIsBitIdentical) {
    TrainConfig config = tiny_config();
    const TrainResult a = train(tiny_data(), nullptr, config);
    set_thread_count(2);
    const TrainResult b = train(tiny_data(), nullptr, config);
    set_thread_count(0);
    std::ostringstream la, lb;
    write_train_log(la, a.log);
    write_train_log(lb, b.log);
    EXPECT_EQ(la.str(), lb.str());
    EXPECT_TRUE(std::equal(a.model.mlps[0].parameters().begin(), a.model.mlps[0].parameters().end(),
                           b.model.mlps[0].parameters().begin()));
    config.seed = 1;
    std::ostringstream lc;
    write_train_log(lc, train(tiny_data(), nullptr, config).log);
    EXPECT_NE(la.str(), lc.str());
}

TEST(Train, SmoothedLossDecreases) {
    TrainConfig config = tiny_config();
    config.iterations = 3000;
    config.warmup_steps = 300;
    const TrainResult r = train(tiny_data(), nullptr, config);
    const auto trailing = [&](int end) {
        double sum = 0.0;
        for (int i = end - 200; i < end; ++i) sum += r.log[i].loss_fine;
        return sum / 200;
    };
    EXPECT_LT(trailing(3000), trailing(400));
}

TEST(Evaluate, DeterministicRowsPerScale) {
    // 88 px keeps the eighth-scale views at the 11 px SSIM window.
    CameraRig rig = default_rig(88, 88);
    const std::vector<Image> images = {generate_scene(SceneSpec::three_spheres(), rig.test.front(), 1)};
    const MultiscaleDataset test = build_multiscale(images, {rig.test.front()});
    TrainConfig config = tiny_config();
    const RadianceModel<float> model = make_model(config);
    EvalOptions opts;
    const auto a = evaluate(model, test, config, opts);
    const auto b = evaluate(model, test, config, opts);
    ASSERT_EQ(a.size(), 4u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].scale, kScaleFactors[i]);
        EXPECT_EQ(a[i].psnr, b[i].psnr);
        EXPECT_EQ(a[i].ssim, b[i].ssim);
    }
}

TEST(TrainConfig, TwoMlpConventions) {
    TrainConfig c;
    c.two_mlps = true;
    EXPECT_EQ(c.render_config(true).n_coarse, c.n_coarse / 2);
    EXPECT_TRUE(c.render_config(true).union_fine);
    EXPECT_EQ(c.loss_lambda(), 1.0);
    c.two_mlps = false;
    EXPECT_EQ(c.loss_lambda(), 0.1);
    c.no_ipe = true;
    EXPECT_EQ(c.encoding_config().variant, EncodingVariant::Pe);
    EXPECT_EQ(c.encoding_config().degree, 16);
}

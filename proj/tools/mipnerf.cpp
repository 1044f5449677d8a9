// Command-line front end: verify, gen-data, train, render, eval, sweep-l.

#include "mipnerf/checkpoint.hpp"
#include "mipnerf/config.hpp"
#include "mipnerf/experiment.hpp"
#include "mipnerf/metrics.hpp"
#include "mipnerf/parallel.hpp"
#include "mipnerf/verify.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace mipnerf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string out;
};

struct DataOptions {
    std::string data_dir;
    std::string scene = "three-spheres";
    int resolution = 96;
    int spp = 4;
};

void add_common(CLI::App* cmd, CommonOptions& common, bool with_config) {
    if (with_config) {
        cmd->add_option("--config", common.config_path, "key = value config file")->check(CLI::ExistingFile);
        cmd->add_option("overrides", common.overrides, "config overrides as key=value");
    }
    cmd->add_option("--seed", common.seed, "random seed (overrides the config)");
    cmd->add_option("--threads", common.threads, "worker thread cap (0 = all cores)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", common.out, "output directory")->required();
}

void add_data(CLI::App* cmd, DataOptions& data) {
    cmd->add_option("--data", data.data_dir, "dataset directory written by gen-data")->check(CLI::ExistingDirectory);
    cmd->add_option("--scene", data.scene, "procedural scene rendered in memory when --data is absent");
    cmd->add_option("--resolution", data.resolution, "full-resolution image size for in-memory scenes")
        ->check(CLI::Range(8, 4096));
}

SceneData load_data(const DataOptions& data) {
    if (!data.data_dir.empty()) return load_scene_data(data.data_dir);
    if (data.resolution % 8 != 0) throw UsageError("--resolution must be divisible by 8");
    return generate_scene_data(data.scene, data.resolution, data.spp);
}

TrainConfig resolve_config(const CommonOptions& common, const KeyValues& base = {},
                           const std::string& method = "") {
    TrainConfig config;
    apply_config(config, base);
    if (!common.config_path.empty()) apply_config(config, read_config_file(common.config_path));
    if (!method.empty()) config = with_method(config, method);
    KeyValues overrides;
    for (const std::string& o : common.overrides) overrides.push_back(parse_override(o));
    apply_config(config, overrides);
    if (common.seed) config.seed = *common.seed;
    config.validate();
    return config;
}

nlohmann::ordered_json config_json(const TrainConfig& config) {
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : config_entries(config)) cfg[k] = v;
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("failed to write " + path.string());
}

void write_manifest(const fs::path& out, nlohmann::ordered_json manifest) {
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
}

void write_timing(const fs::path& path, const std::vector<std::pair<std::string, double>>& rows) {
    std::ostringstream s;
    s << "item,wall_ms\n";
    char buf[64];
    for (const auto& [name, ms] : rows) {
        std::snprintf(buf, sizeof(buf), "%.3f", ms);
        s << name << ',' << buf << '\n';
    }
    write_text(path, s.str());
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

/// A training run directory: checkpoint plus the config it was trained with.
struct Run {
    fs::path dir;
    RadianceModel<float> model;
    TrainConfig config;
    std::string scene;
};

Run load_run(const fs::path& dir, const CommonOptions& common) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw UsageError("--run " + dir.string() + ": no manifest.json");
    const auto manifest = nlohmann::json::parse(in);
    KeyValues base;
    for (const auto& [k, v] : manifest.at("config").items()) base.emplace_back(k, v.get<std::string>());
    Run run;
    run.dir = dir;
    run.config = resolve_config(common, base);
    run.model = load_checkpoint(dir / "checkpoint.bin");
    run.scene = manifest.value("scene", "");
    return run;
}

int cmd_verify(const CommonOptions& common, const VerifyOptions& base, const std::vector<std::string>& only,
               const std::string& report_path) {
    VerifyOptions options = base;
    if (common.seed) options.seed = *common.seed;
    for (const std::string& name : only) {
        const auto& checks = registered_checks();
        if (std::none_of(checks.begin(), checks.end(), [&](const RegisteredCheck& c) { return c.name == name; }))
            throw UsageError("unknown check '" + name + "'");
    }
    std::vector<CheckResult> results;
    for (const RegisteredCheck& check : registered_checks()) {
        if (!only.empty() && std::find(only.begin(), only.end(), check.name) == only.end()) continue;
        results.push_back(check.run(options));
        const CheckResult& r = results.back();
        std::printf("%s %s statistic=%.6g %s %.6g\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.statistic,
                    to_string(r.comparison).c_str(), r.tolerance);
        std::fflush(stdout);
    }
    const auto report = verify_report(options, results);
    fs::create_directories(common.out);
    const fs::path path = report_path.empty() ? fs::path(common.out) / "verify_report.json" : fs::path(report_path);
    write_text(path, report.dump(2) + "\n");
    write_manifest(common.out, {{"command", "verify"},
                                {"seed", options.seed},
                                {"sample_scale", options.sample_scale},
                                {"artifacts", {path.filename().string()}}});
    return report.at("pass").get<bool>() ? kExitOk : kExitFailure;
}

int cmd_gen_data(const CommonOptions& common, const DataOptions& data) {
    if (data.resolution % 8 != 0) throw UsageError("--resolution must be divisible by 8");
    const SceneSpec scene = SceneSpec::by_name(data.scene);
    write_dataset(common.out, scene, default_rig(data.resolution, data.resolution), data.spp);
    write_manifest(common.out, {{"command", "gen-data"},
                                {"scene", scene.name},
                                {"resolution", data.resolution},
                                {"spp_per_axis", data.spp},
                                {"artifacts", {"transforms_train.json", "transforms_test.json", "train", "test"}}});
    return kExitOk;
}

int cmd_train(const CommonOptions& common, const DataOptions& data, const std::string& method) {
    const TrainConfig config = resolve_config(common, {}, method);
    const SceneData scene = load_data(data);
    const ProgressFn progress = [&](const TrainLogRow& row) {
        if (row.iteration % 1000 == 0 || row.iteration + 1 == config.iterations)
            std::fprintf(stderr, "iter %d loss_coarse %.6g loss_fine %.6g lr %.3g\n", row.iteration, row.loss_coarse,
                         row.loss_fine, row.lr);
    };
    const TrainResult result = train(scene.train, &scene.test, config, progress);
    write_train_outputs(common.out, result, config, scene.scene);
    return kExitOk;
}

int cmd_render(const CommonOptions& common, const DataOptions& data, const std::string& run_dir,
               const std::string& split, int view, int scale, int supersample) {
    const Run run = load_run(run_dir, common);
    const SceneData scene = load_data(data);
    const MultiscaleDataset& set = split == "train" ? scene.train : scene.test;
    const auto views = set.at_scale(scale);
    if (view < 0 || view >= static_cast<int>(views.size()))
        throw UsageError("--view " + std::to_string(view) + " out of range for split " + split);
    const ScaledView& target = *views[view];

    RenderConfig render = run.config.render_config(false);
    render.supersample = supersample;
    const auto start = std::chrono::steady_clock::now();
    const RenderedImage r = render_image(run.model, target.camera, render, run.config.seed);
    const double ms = elapsed_ms(start);

    Image image(r.width, r.height);
    for (std::size_t i = 0; i < r.fine.size(); ++i) image.pixels[i] = r.fine[i].cwiseMax(0.0).cwiseMin(1.0);
    const MetricRow metrics = make_metric_row(scene.scene, scale, method_name(run.config), image, target.image);

    fs::create_directories(common.out);
    const std::string stem = split + "_" + view_filename(view, scale);
    write_png(fs::path(common.out) / (stem + ".png"), image);
    write_float_image(fs::path(common.out) / (stem + ".f32"), image);
    std::ostringstream csv;
    write_metric_csv_header(csv);
    write_metric_csv_row(csv, metrics);
    write_text(fs::path(common.out) / "metrics.csv", csv.str());
    write_timing(fs::path(common.out) / "timing.csv", {{stem, ms}});
    write_manifest(common.out, {{"command", "render"},
                                {"run", run_dir},
                                {"split", split},
                                {"view", view},
                                {"scale", scale},
                                {"supersample", supersample},
                                {"seed", run.config.seed},
                                {"width", r.width},
                                {"height", r.height},
                                {"artifacts", {stem + ".png", stem + ".f32", "metrics.csv", "timing.csv"}}});
    return kExitOk;
}

int cmd_eval(const CommonOptions& common, const DataOptions& data, const std::vector<std::string>& run_dirs,
             const std::vector<std::string>& labels, const std::vector<int>& scales, int supersample) {
    if (!labels.empty() && labels.size() != run_dirs.size())
        throw UsageError("--label must be given once per --run");
    const SceneData scene = load_data(data);
    std::vector<MetricRow> rows;
    std::vector<std::pair<std::string, double>> timing;
    for (std::size_t i = 0; i < run_dirs.size(); ++i) {
        const Run run = load_run(run_dirs[i], common);
        MultiscaleDataset test;
        for (const ScaledView& v : scene.test.views)
            if (std::find(scales.begin(), scales.end(), v.factor) != scales.end()) test.views.push_back(v);
        EvalOptions options;
        options.scene = scene.scene;
        options.method = labels.empty() ? method_name(run.config) : labels[i];
        options.supersample = supersample;
        options.seed = run.config.seed;
        const auto start = std::chrono::steady_clock::now();
        const auto result = evaluate(run.model, test, run.config, options);
        timing.emplace_back(options.method, elapsed_ms(start));
        rows.insert(rows.end(), result.begin(), result.end());
    }
    std::ostringstream csv;
    write_metric_csv_header(csv);
    bool finite = true;
    for (const MetricRow& r : rows) {
        write_metric_csv_row(csv, r);
        finite = finite && std::isfinite(r.ssim) && !std::isnan(r.psnr);
    }
    fs::create_directories(common.out);
    write_text(fs::path(common.out) / "metrics.csv", csv.str());
    write_timing(fs::path(common.out) / "timing.csv", timing);
    write_manifest(common.out, {{"command", "eval"},
                                {"scene", scene.scene},
                                {"runs", run_dirs},
                                {"scales", scales},
                                {"supersample", supersample},
                                {"rows", rows.size()},
                                {"artifacts", {"metrics.csv", "timing.csv"}}});
    return finite ? kExitOk : kExitFailure;
}

int cmd_sweep(const CommonOptions& common, const DataOptions& data, const SweepOptions& sweep) {
    const TrainConfig base = resolve_config(common);
    const SweepOptions& options = sweep;
    const SceneData scene = load_data(data);
    const auto runs = sweep_degree(scene, base, options, [](const SweepRun& r) {
        std::fprintf(stderr, "%s L=%d seed=%llu psnr=%.3f\n", r.variant.c_str(), r.degree,
                     static_cast<unsigned long long>(r.seed), r.psnr);
    });
    const auto rows = summarize_sweep(runs);
    fs::create_directories(common.out);
    std::ostringstream summary, detail;
    write_sweep_csv(summary, rows);
    write_sweep_runs_csv(detail, runs);
    write_text(fs::path(common.out) / "sweep_l.csv", summary.str());
    write_text(fs::path(common.out) / "sweep_runs.csv", detail.str());
    write_manifest(common.out, {{"command", "sweep-l"},
                                {"scene", scene.scene},
                                {"degrees", options.degrees},
                                {"seeds", options.seeds},
                                {"variants", options.variants},
                                {"config", config_json(base)},
                                {"artifacts", {"sweep_l.csv", "sweep_runs.csv"}}});
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mip-NeRF: multiscale anti-aliased neural radiance fields on the CPU", "mipnerf"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "mipnerf 1.0");

    CommonOptions common;
    DataOptions data;

    auto* verify = app.add_subcommand("verify", "run every oracle check and write a JSON report");
    add_common(verify, common, false);
    VerifyOptions verify_options;
    std::vector<std::string> only;
    std::string report;
    verify->add_option("--report", report, "report path (default <out>/verify_report.json)");
    verify->add_option("--sample-scale", verify_options.sample_scale, "multiplier on Monte Carlo sample counts")
        ->check(CLI::PositiveNumber);
    verify->add_flag("--mutate-var-t", verify_options.mutate_var_t,
                     "flip the sign of the t-variance correction (mutation test)");
    verify->add_option("--check", only, "run only the named checks (repeatable)")->allow_extra_args(false);

    auto* gen = app.add_subcommand("gen-data", "render the procedural multiscale dataset");
    add_common(gen, common, false);
    gen->add_option("--scene", data.scene, "scene name");
    gen->add_option("--resolution", data.resolution, "full-resolution image size")->check(CLI::Range(8, 4096));
    gen->add_option("--spp", data.spp, "ground-truth subpixel grid per axis")->check(CLI::Range(1, 64));

    auto* train_cmd = app.add_subcommand("train", "train a model; writes checkpoint, logs and manifest");
    add_common(train_cmd, common, true);
    add_data(train_cmd, data);
    std::string method;
    train_cmd->add_option("--method", method, "ablation preset: mip, no_ipe, two_mlps, no_area_loss, concat_pe");

    auto* render = app.add_subcommand("render", "render one dataset view with a trained model");
    add_common(render, common, true);
    add_data(render, data);
    std::string run_dir;
    std::string split = "test";
    int view = 0;
    int scale = 1;
    int supersample = 1;
    render->add_option("--run", run_dir, "training output directory")->required()->check(CLI::ExistingDirectory);
    render->add_option("--split", split, "dataset split")->check(CLI::IsMember({"train", "test"}));
    render->add_option("--view", view, "view index within the split")->check(CLI::NonNegativeNumber);
    render->add_option("--scale", scale, "downscale factor")->check(CLI::IsMember({1, 2, 4, 8}));
    render->add_option("--supersample", supersample, "jittered cones per pixel")->check(CLI::Range(1, 1024));

    auto* eval = app.add_subcommand("eval", "PSNR / SSIM / avg2 of trained models on the test split");
    add_common(eval, common, true);
    add_data(eval, data);
    std::vector<std::string> runs;
    std::vector<std::string> labels;
    std::vector<int> scales = {1, 2, 4, 8};
    int eval_supersample = 1;
    eval->add_option("--run", runs, "training output directory (repeatable)")
        ->required()
        ->allow_extra_args(false)
        ->check(CLI::ExistingDirectory);
    eval->add_option("--label", labels, "method label per --run (default: derived from the config)")
        ->allow_extra_args(false);
    eval->add_option("--scales", scales, "scale factors to evaluate (repeatable)")
        ->allow_extra_args(false)
        ->check(CLI::IsMember({1, 2, 4, 8}));
    eval->add_option("--supersample", eval_supersample, "jittered cones per pixel")->check(CLI::Range(1, 1024));

    auto* sweep = app.add_subcommand("sweep-l", "test PSNR versus encoding degree L for PE and IPE");
    add_common(sweep, common, true);
    add_data(sweep, data);
    SweepOptions sweep_options;
    sweep->add_option("--L", sweep_options.degrees, "degrees to sweep")
        ->delimiter(',')
        ->allow_extra_args(false)
        ->check(CLI::Range(1, 30));
    sweep->add_option("--seeds", sweep_options.seeds, "seeds per degree")->delimiter(',')->allow_extra_args(false);
    sweep->add_option("--variants", sweep_options.variants, "encodings to sweep")
        ->delimiter(',')
        ->allow_extra_args(false)
        ->check(CLI::IsMember({"pe", "ipe"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (common.seed && sweep->count("--seeds") == 0) sweep_options.seeds = {*common.seed};

    try {
        set_thread_count(common.threads);
        if (*verify) return cmd_verify(common, verify_options, only, report);
        if (*gen) return cmd_gen_data(common, data);
        if (*train_cmd) return cmd_train(common, data, method);
        if (*render) return cmd_render(common, data, run_dir, split, view, scale, supersample);
        if (*eval) return cmd_eval(common, data, runs, labels, scales, eval_supersample);
        if (*sweep) return cmd_sweep(common, data, sweep_options);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

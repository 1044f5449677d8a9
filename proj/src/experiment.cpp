#include "mipnerf/experiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace mipnerf {

SceneData generate_scene_data(const std::string& scene, int resolution, int spp_per_axis) {
    const SceneSpec spec = SceneSpec::by_name(scene);
    const CameraRig rig = default_rig(resolution, resolution);
    const auto render = [&](const std::vector<Camera>& cameras) {
        std::vector<Image> images;
        for (const Camera& c : cameras) images.push_back(generate_scene(spec, c, spp_per_axis));
        return build_multiscale(images, cameras);
    };
    return {spec.name, render(rig.train), render(rig.test)};
}

SceneData load_scene_data(const std::filesystem::path& dir) {
    std::ifstream in(dir / "transforms_train.json");
    if (!in) throw std::runtime_error("cannot open " + (dir / "transforms_train.json").string());
    const auto meta = nlohmann::json::parse(in);
    SceneData data;
    data.scene = meta.value("scene", dir.filename().string());
    data.train = load_dataset(dir, "train");
    data.test = load_dataset(dir, "test");
    return data;
}

MultiscaleDataset restrict_to_scale(const MultiscaleDataset& data, int factor) {
    MultiscaleDataset out;
    for (const ScaledView& v : data.views)
        if (v.factor == factor) out.views.push_back(v);
    if (out.views.empty()) throw std::invalid_argument("dataset has no views at scale " + std::to_string(factor));
    return out;
}

std::string method_name(const TrainConfig& config) {
    std::vector<std::string> parts;
    if (config.no_ipe) parts.push_back("no_ipe");
    else if (config.encoding == "pe") parts.push_back("pe");
    else if (config.encoding == "concat_pe") parts.push_back("concat_pe");
    if (config.two_mlps) parts.push_back("two_mlps");
    if (config.no_area_loss) parts.push_back("no_area_loss");
    if (parts.empty()) return "mip";
    std::string name = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) name += "+" + parts[i];
    return name;
}

TrainConfig with_method(TrainConfig config, const std::string& method) {
    if (method == "mip" || method == "ipe") {
        config.encoding = "ipe";
        config.no_ipe = false;
    } else if (method == "no_ipe" || method == "pe") {
        config.no_ipe = true;
    } else if (method == "two_mlps") {
        config.two_mlps = true;
    } else if (method == "no_area_loss") {
        config.no_area_loss = true;
    } else if (method == "concat_pe") {
        config.encoding = "concat_pe";
        config.no_ipe = false;
    } else {
        throw std::invalid_argument("unknown method '" + method + "'");
    }
    return config;
}

std::vector<SweepRun> sweep_degree(const SceneData& data, const TrainConfig& base, const SweepOptions& options,
                                   const SweepProgress& progress) {
    const MultiscaleDataset train_views = restrict_to_scale(data.train, 1);
    const MultiscaleDataset test_views = restrict_to_scale(data.test, 1);
    std::vector<SweepRun> runs;
    for (const std::string& variant : options.variants) {
        for (int degree : options.degrees) {
            for (std::uint64_t seed : options.seeds) {
                TrainConfig config = with_method(base, variant);
                config.degree = degree;
                config.seed = seed;
                config.eval_every = 0;
                config.validate();
                const TrainResult result = train(train_views, nullptr, config);
                EvalOptions eval;
                eval.scene = data.scene;
                eval.method = variant;
                eval.seed = seed;
                const auto rows = evaluate(result.model, test_views, config, eval);
                SweepRun run{variant, degree, seed, rows.front().psnr};
                if (progress) progress(run);
                runs.push_back(run);
            }
        }
    }
    return runs;
}

std::vector<SweepRow> summarize_sweep(const std::vector<SweepRun>& runs) {
    std::vector<SweepRow> rows;
    std::vector<int> counts;
    for (const SweepRun& r : runs) {
        auto it = std::find_if(rows.begin(), rows.end(),
                               [&](const SweepRow& row) { return row.variant == r.variant && row.degree == r.degree; });
        if (it == rows.end()) {
            rows.push_back({r.variant, r.degree, 0.0});
            counts.push_back(0);
            it = rows.end() - 1;
        }
        it->psnr += r.psnr;
        ++counts[it - rows.begin()];
    }
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].psnr /= counts[i];
    return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "variant,L,psnr\n";
    char buf[64];
    for (const SweepRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.9g", r.psnr);
        out << r.variant << ',' << r.degree << ',' << buf << '\n';
    }
}

void write_sweep_runs_csv(std::ostream& out, const std::vector<SweepRun>& runs) {
    out << "variant,L,seed,psnr\n";
    char buf[64];
    for (const SweepRun& r : runs) {
        std::snprintf(buf, sizeof(buf), "%.9g", r.psnr);
        out << r.variant << ',' << r.degree << ',' << r.seed << ',' << buf << '\n';
    }
}

double sweep_spread(const std::vector<SweepRow>& rows, const std::string& variant) {
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (const SweepRow& r : rows) {
        if (r.variant != variant) continue;
        lo = any ? std::min(lo, r.psnr) : r.psnr;
        hi = any ? std::max(hi, r.psnr) : r.psnr;
        any = true;
    }
    if (!any) throw std::invalid_argument("no sweep rows for variant '" + variant + "'");
    return hi - lo;
}

int sweep_best_degree(const std::vector<SweepRow>& rows, const std::string& variant) {
    const SweepRow* best = nullptr;
    for (const SweepRow& r : rows)
        if (r.variant == variant && (!best || r.psnr > best->psnr)) best = &r;
    if (!best) throw std::invalid_argument("no sweep rows for variant '" + variant + "'");
    return best->degree;
}

}  // namespace mipnerf

#pragma once

#include "mipnerf/dataset.hpp"
#include "mipnerf/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace mipnerf {

/// Train and test splits of a procedural scene, rendered in memory.
struct SceneData {
    std::string scene;
    MultiscaleDataset train;
    MultiscaleDataset test;
};

SceneData generate_scene_data(const std::string& scene, int resolution = 96, int spp_per_axis = 4);

/// Splits written by gen-data. The scene name comes from transforms_train.json.
SceneData load_scene_data(const std::filesystem::path& dir);

/// Only the views of one scale factor.
MultiscaleDataset restrict_to_scale(const MultiscaleDataset& data, int factor);

/// Short label of the ablation a config runs: mip, no_ipe, two_mlps, no_area_loss,
/// concat_pe, or combinations joined by '+'.
std::string method_name(const TrainConfig& config);

/// Applies a method label (mip, no_ipe, pe, ipe, two_mlps, no_area_loss, concat_pe)
/// on top of a base config. Throws std::invalid_argument for unknown names.
TrainConfig with_method(TrainConfig config, const std::string& method);

struct SweepRun {
    std::string variant;  // pe or ipe
    int degree = 0;
    std::uint64_t seed = 0;
    double psnr = 0.0;
};

struct SweepRow {
    std::string variant;
    int degree = 0;
    double psnr = 0.0;  // mean over seeds
};

struct SweepOptions {
    std::vector<int> degrees = {8, 12, 16, 20};
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    std::vector<std::string> variants = {"pe", "ipe"};
};

using SweepProgress = std::function<void(const SweepRun&)>;

/// Trains every (variant, L, seed) on the full-resolution training views and
/// reports full-resolution test PSNR.
std::vector<SweepRun> sweep_degree(const SceneData& data, const TrainConfig& base, const SweepOptions& options,
                                   const SweepProgress& progress = nullptr);

/// Seed-averaged rows in (variant, L) order of first appearance.
std::vector<SweepRow> summarize_sweep(const std::vector<SweepRun>& runs);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_sweep_runs_csv(std::ostream& out, const std::vector<SweepRun>& runs);

/// Max minus min PSNR of one variant's rows.
double sweep_spread(const std::vector<SweepRow>& rows, const std::string& variant);
/// L with the highest PSNR for one variant (first on ties).
int sweep_best_degree(const std::vector<SweepRow>& rows, const std::string& variant);

}  // namespace mipnerf

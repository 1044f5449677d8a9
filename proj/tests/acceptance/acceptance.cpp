// Acceptance suite: one PASS/FAIL line per criterion. Training criteria use the
// desk configuration in tools/configs/desk.cfg.

#include "mipnerf/config.hpp"
#include "mipnerf/experiment.hpp"
#include "mipnerf/trainer.hpp"
#include "mipnerf/verify.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace mipnerf;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), format, args...);
    return buf;
}

struct Outcome {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    nlohmann::ordered_json data = nlohmann::ordered_json::object();

    Outcome() = default;
    Outcome(int id_, std::string name_, bool pass_ = false, std::string detail_ = {})
        : id(id_), name(std::move(name_)), pass(pass_), detail(std::move(detail_)) {}
};

void report(const Outcome& o) {
    std::printf("%s criterion %d %s: %s\n", o.pass ? "PASS" : "FAIL", o.id, o.name.c_str(), o.detail.c_str());
    std::fflush(stdout);
}

// ---- criteria 1-6: oracle checks at full sample counts --------------------------------

std::string describe(const CheckResult& r) {
    return fmt("%s=%.4g %s %.4g", r.name.c_str(), r.statistic, to_string(r.comparison).c_str(), r.tolerance);
}

Outcome oracle_criterion(int id, const std::string& name, double runtime_limit_s,
                         const std::vector<std::function<CheckResult()>>& checks) {
    Outcome o{id, name};
    const auto start = Clock::now();
    bool all = true;
    for (const auto& run : checks) {
        const CheckResult r = run();
        all = all && r.pass;
        o.detail += describe(r) + "; ";
        o.data["checks"].push_back({{"name", r.name}, {"statistic", r.statistic}, {"pass", r.pass}});
    }
    const double elapsed = seconds_since(start);
    o.data["runtime_s"] = elapsed;
    if (runtime_limit_s > 0) {
        o.detail += fmt("runtime=%.1fs < %.0fs", elapsed, runtime_limit_s);
        all = all && elapsed < runtime_limit_s;
    } else {
        o.detail += fmt("runtime=%.1fs", elapsed);
    }
    o.pass = all;
    return o;
}

Outcome criterion_1() {
    const VerifyOptions v;
    return oracle_criterion(1, "frustum_moment_oracle", 120, {[&] { return check_frustum_moments_mc(v, 100); }});
}

Outcome criterion_2() {
    return oracle_criterion(2, "moment_stability", 0,
                            {[] { return check_moments_exact_rational(); },
                             [] { return check_moments_thin_interval_finite(); }});
}

Outcome criterion_3() {
    const VerifyOptions v;
    return oracle_criterion(3, "ipe_correctness", 120,
                            {[&] { return check_ipe_mc(v, 50, 4); }, [&] { return check_ipe_zero_cov_is_pe(v); }});
}

Outcome criterion_4() {
    const VerifyOptions v;
    return oracle_criterion(4, "expected_trig_identities", 0, {[&] { return check_expected_trig_mc(v); }});
}

Outcome criterion_5() {
    const VerifyOptions v;
    GradientCheckOptions g;
    g.parameters = 256;
    g.tolerance = 1e-4;
    return oracle_criterion(5, "gradient_verification", 300, {[&] { return check_gradient_fd(v, g); }});
}

Outcome criterion_6() {
    const VerifyOptions v;
    return oracle_criterion(6, "quadrature_sanity", 0,
                            {[] { return check_composite_two_interval(); },
                             [&] { return check_composite_fine_grid(v, 20, 1024, 10000); }});
}

// ---- criteria 7-10: desk-scale training experiments -----------------------------------

struct RunRecord {
    std::string method;
    std::uint64_t seed = 0;
    std::size_t parameters = 0;
    double train_s = 0.0;
    std::vector<MetricRow> rows;  // per scale 1, 2, 4, 8
    RadianceModel<float> model;
    TrainConfig config;
    std::vector<TrainLogRow> log;
};

double psnr_at(const RunRecord& r, int scale) {
    for (const MetricRow& m : r.rows)
        if (m.scale == scale) return m.psnr;
    throw std::logic_error("missing scale");
}

double mean_avg2(const RunRecord& r) {
    double s = 0.0;
    for (const MetricRow& m : r.rows) s += m.avg2;
    return s / r.rows.size();
}

// Mean of loss_fine over the `window` iterations ending at `end`.
double trailing_loss(const std::vector<TrainLogRow>& log, int end, int window) {
    double s = 0.0;
    for (int i = end - window; i < end; ++i) s += log[i].loss_fine;
    return s / window;
}

class Experiments {
  public:
    Experiments(TrainConfig desk, std::vector<std::uint64_t> seeds, fs::path work)
        : desk_(std::move(desk)), seeds_(std::move(seeds)), work_(std::move(work)) {}

    const std::vector<std::uint64_t>& seeds() const { return seeds_; }
    const TrainConfig& desk() const { return desk_; }

    const SceneData& data() {
        if (!data_) data_ = generate_scene_data("three-spheres", 96, 4);
        return *data_;
    }

    const RunRecord& run(const std::string& method, std::uint64_t seed) {
        const auto key = std::make_pair(method, seed);
        auto it = runs_.find(key);
        if (it != runs_.end()) return it->second;
        RunRecord r;
        r.method = method;
        r.seed = seed;
        r.config = with_method(desk_, method);
        r.config.seed = seed;
        r.config.validate();
        const auto start = Clock::now();
        TrainResult result = train(data().train, nullptr, r.config);
        r.train_s = seconds_since(start);
        EvalOptions eval;
        eval.method = method;
        eval.seed = seed;
        r.rows = evaluate(result.model, data().test, r.config, eval);
        r.parameters = result.model.parameter_count();
        r.model = std::move(result.model);
        r.log = std::move(result.log);
        std::fprintf(stderr, "trained %s seed %llu in %.0fs: psnr full %.3f eighth %.3f\n", method.c_str(),
                     static_cast<unsigned long long>(seed), r.train_s, psnr_at(r, 1), psnr_at(r, 8));
        write_run(r);
        return runs_.emplace(key, std::move(r)).first->second;
    }

  private:
    void write_run(const RunRecord& r) const {
        const fs::path dir = work_ / "runs";
        fs::create_directories(dir);
        std::ofstream out(dir / (r.method + "_seed" + std::to_string(r.seed) + ".csv"));
        write_metric_csv_header(out);
        for (const MetricRow& m : r.rows) write_metric_csv_row(out, m);
    }

    TrainConfig desk_;
    std::vector<std::uint64_t> seeds_;
    fs::path work_;
    std::optional<SceneData> data_;
    std::map<std::pair<std::string, std::uint64_t>, RunRecord> runs_;
};

Outcome criterion_7(Experiments& ex) {
    Outcome o{7, "multiscale_benefit"};
    const auto start = Clock::now();
    double eighth_gain = 0.0, full_gain = 0.0;
    bool loss_decreases = true;
    for (std::uint64_t seed : ex.seeds()) {
        const RunRecord& mip = ex.run("mip", seed);
        const RunRecord& base = ex.run("no_ipe", seed);
        eighth_gain += psnr_at(mip, 8) - psnr_at(base, 8);
        full_gain += psnr_at(mip, 1) - psnr_at(base, 1);
        const int n = static_cast<int>(mip.log.size());
        const bool decreasing = n >= 2000 && trailing_loss(mip.log, n, 1000) < trailing_loss(mip.log, 2000, 1000);
        loss_decreases = loss_decreases && decreasing;
        o.data["runs"].push_back({{"seed", seed},
                                  {"mip_psnr", {psnr_at(mip, 1), psnr_at(mip, 2), psnr_at(mip, 4), psnr_at(mip, 8)}},
                                  {"no_ipe_psnr",
                                   {psnr_at(base, 1), psnr_at(base, 2), psnr_at(base, 4), psnr_at(base, 8)}},
                                  {"mip_trailing_loss_decreases", decreasing}});
    }
    eighth_gain /= ex.seeds().size();
    full_gain /= ex.seeds().size();
    const double elapsed = seconds_since(start);
    o.pass = eighth_gain >= 1.0 && full_gain >= -0.5 && elapsed < 3600;
    o.detail = fmt("eighth_scale_gain=%.3f dB >= 1.0; full_scale_gain=%.3f dB >= -0.5; seeds=%zu; runtime=%.0fs < 3600s",
                   eighth_gain, full_gain, ex.seeds().size(), elapsed);
    o.detail += fmt("; smoothed training loss decreases: %s", loss_decreases ? "yes" : "no");
    o.data["eighth_scale_gain_db"] = eighth_gain;
    o.data["full_scale_gain_db"] = full_gain;
    o.data["runtime_s"] = elapsed;
    return o;
}

Outcome criterion_8(Experiments& ex) {
    Outcome o{8, "single_vs_two_mlp_parity"};
    double mip = 0.0, two = 0.0;
    bool doubled = true;
    std::size_t single_params = 0, two_params = 0;
    for (std::uint64_t seed : ex.seeds()) {
        const RunRecord& a = ex.run("mip", seed);
        const RunRecord& b = ex.run("two_mlps", seed);
        mip += mean_avg2(a);
        two += mean_avg2(b);
        single_params = a.parameters;
        two_params = b.parameters;
        doubled = doubled && b.parameters == 2 * a.parameters;
        o.data["runs"].push_back({{"seed", seed}, {"mip_avg2", mean_avg2(a)}, {"two_mlps_avg2", mean_avg2(b)}});
    }
    mip /= ex.seeds().size();
    two /= ex.seeds().size();
    const double rel = std::abs(two - mip) / mip;
    o.pass = rel <= 0.10 && doubled;
    o.detail = fmt("avg2 mip=%.5f two_mlps=%.5f relative_difference=%.4f <= 0.10; parameters %zu == 2 x %zu", mip, two,
                   rel, two_params, single_params);
    o.data["relative_difference"] = rel;
    return o;
}

Outcome criterion_9(Experiments& ex) {
    Outcome o{9, "supersampling_parity"};
    const MultiscaleDataset eighth = restrict_to_scale(ex.data().test, 8);
    double gap_before = 0.0, gap_after = 0.0, t1 = 0.0, t16 = 0.0;
    for (std::uint64_t seed : ex.seeds()) {
        const RunRecord& mip = ex.run("mip", seed);
        const RunRecord& base = ex.run("no_ipe", seed);
        EvalOptions eval;
        eval.method = "no_ipe";
        eval.seed = seed;
        auto start = Clock::now();
        const double plain = evaluate(base.model, eighth, base.config, eval).front().psnr;
        t1 += seconds_since(start);
        eval.supersample = 16;
        start = Clock::now();
        const double super = evaluate(base.model, eighth, base.config, eval).front().psnr;
        t16 += seconds_since(start);
        gap_before += psnr_at(mip, 8) - plain;
        gap_after += psnr_at(mip, 8) - super;
        o.data["runs"].push_back({{"seed", seed},
                                  {"mip_eighth_psnr", psnr_at(mip, 8)},
                                  {"no_ipe_eighth_psnr", plain},
                                  {"no_ipe_ss16_eighth_psnr", super}});
    }
    gap_before /= ex.seeds().size();
    gap_after /= ex.seeds().size();
    const double shrink = gap_before > 0 ? 1.0 - gap_after / gap_before : 0.0;
    const double time_ratio = t16 / t1;
    o.pass = gap_before > 0 && shrink >= 0.5 && time_ratio >= 8.0;
    o.detail = fmt("gap_before=%.3f dB gap_after=%.3f dB shrink=%.3f >= 0.5; render_time_ratio=%.2f >= 8", gap_before,
                   gap_after, shrink, time_ratio);
    if (gap_before <= 0) o.detail += " (no positive gap to close)";
    o.data["gap_shrink"] = shrink;
    o.data["render_time_ratio"] = time_ratio;
    return o;
}

Outcome criterion_10(Experiments& ex, const fs::path& work) {
    Outcome o{10, "l_sweep"};
    SweepOptions options;
    options.seeds = ex.seeds();
    const auto start = Clock::now();
    const auto runs = sweep_degree(ex.data(), ex.desk(), options, [](const SweepRun& r) {
        std::fprintf(stderr, "sweep %s L=%d seed %llu: psnr %.3f\n", r.variant.c_str(), r.degree,
                     static_cast<unsigned long long>(r.seed), r.psnr);
    });
    const auto rows = summarize_sweep(runs);
    {
        fs::create_directories(work);
        std::ofstream csv(work / "sweep_l.csv");
        write_sweep_csv(csv, rows);
        std::ofstream all(work / "sweep_runs.csv");
        write_sweep_runs_csv(all, runs);
    }
    const double ipe_spread = sweep_spread(rows, "ipe");
    const int pe_best = sweep_best_degree(rows, "pe");
    const int lo = *std::min_element(options.degrees.begin(), options.degrees.end());
    const int hi = *std::max_element(options.degrees.begin(), options.degrees.end());
    o.pass = ipe_spread <= 0.5 && pe_best > lo && pe_best < hi;
    o.detail = fmt("ipe_spread=%.3f dB <= 0.5; pe_best_L=%d strictly inside [%d, %d]; runtime=%.0fs", ipe_spread,
                   pe_best, lo, hi, seconds_since(start));
    for (const SweepRow& r : rows) {
        o.detail += fmt("; %s L=%d %.3f", r.variant.c_str(), r.degree, r.psnr);
        o.data["rows"].push_back({{"variant", r.variant}, {"L", r.degree}, {"psnr", r.psnr}});
    }
    return o;
}

// ---- criterion 11: CLI determinism ------------------------------------------------------

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MIPNERF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Every file of the two output trees except wall-clock timing files.
bool same_outputs(const fs::path& a, const fs::path& b, std::vector<std::string>& compared, std::string& mismatch) {
    std::set<std::string> files;
    for (const fs::path& root : {a, b})
        for (const auto& e : fs::recursive_directory_iterator(root))
            if (e.is_regular_file()) files.insert(fs::relative(e.path(), root).string());
    for (const std::string& f : files) {
        if (fs::path(f).filename() == "timing.csv") continue;
        compared.push_back(f);
        if (!fs::exists(a / f) || !fs::exists(b / f) || slurp(a / f) != slurp(b / f)) {
            mismatch = f;
            return false;
        }
    }
    return true;
}

Outcome criterion_11(const fs::path& work) {
    Outcome o{11, "cli_determinism"};
    const fs::path root = work / "determinism";
    fs::remove_all(root);
    const std::string data = (root / "data").string();
    const std::string tiny =
        "iterations=40 batch_rays=16 warmup_steps=5 degree=8 depth=2 width=16 n_coarse=8 n_fine=8 eval_every=20";
    const std::string train_a = (root / "train_a").string();
    struct Command {
        std::string name;
        std::string args;
    };
    const std::vector<Command> commands = {
        {"gen-data", "gen-data --resolution 88 --spp 1 --seed 4"},
        {"train", "train --data " + data + " --seed 4 " + tiny},
        {"train_two_mlps", "train --data " + data + " --method two_mlps --seed 4 " + tiny},
        {"render", "render --data " + data + " --run " + train_a + " --scale 2 --supersample 4 --seed 4"},
        {"eval", "eval --data " + data + " --run " + train_a + " --supersample 2 --seed 4"},
        {"sweep-l", "sweep-l --data " + data + " --L 4,8 --seeds 0,1 " + tiny},
        {"verify", "verify --sample-scale 0.01 --check frustum_moments_mc --check ipe_mc --check gradient_fd --seed 4"},
    };
    bool all = true;
    for (const Command& c : commands) {
        const bool is_gen = c.name == "gen-data";
        const fs::path a = is_gen ? root / "data" : root / (c.name + "_a");
        const fs::path b = root / (c.name + "_b");
        const int code_a = run_cli(c.args + " --threads 1 --out " + a.string());
        const int code_b = run_cli(c.args + " --threads 3 --out " + b.string());
        std::vector<std::string> compared;
        std::string mismatch;
        const bool same = code_a == 0 && code_b == 0 && same_outputs(a, b, compared, mismatch);
        all = all && same;
        o.detail += fmt("%s %s (%zu files); ", c.name.c_str(), same ? "identical" : "DIFFERENT", compared.size());
        if (!same) o.detail += fmt("[exit %d/%d, first mismatch '%s'] ", code_a, code_b, mismatch.c_str());
        o.data["commands"].push_back({{"command", c.name}, {"identical", same}, {"files", compared}});
    }
    o.pass = all;
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> criteria = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    std::string work = "acceptance";
    std::string desk_path = MIPNERF_DESK_CONFIG;
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    app.add_option("--criteria", criteria, "criteria to run")->delimiter(',')->check(CLI::Range(1, 11));
    app.add_option("--work", work, "scratch and results directory");
    app.add_option("--desk-config", desk_path, "desk training config")->check(CLI::ExistingFile);
    app.add_option("--seeds", seeds, "seeds for the training criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    TrainConfig desk;
    apply_config(desk, read_config_file(desk_path));
    desk.validate();
    Experiments ex(desk, seeds, work);

    std::vector<Outcome> outcomes;
    for (int id : criteria) {
        Outcome o;
        try {
            switch (id) {
                case 1: o = criterion_1(); break;
                case 2: o = criterion_2(); break;
                case 3: o = criterion_3(); break;
                case 4: o = criterion_4(); break;
                case 5: o = criterion_5(); break;
                case 6: o = criterion_6(); break;
                case 7: o = criterion_7(ex); break;
                case 8: o = criterion_8(ex); break;
                case 9: o = criterion_9(ex); break;
                case 10: o = criterion_10(ex, work); break;
                case 11: o = criterion_11(work); break;
            }
        } catch (const std::exception& e) {
            o = Outcome(id, "criterion", false, std::string("error: ") + e.what());
        }
        report(o);
        outcomes.push_back(o);
    }

    nlohmann::ordered_json summary = nlohmann::ordered_json::array();
    bool all = true;
    for (const Outcome& o : outcomes) {
        all = all && o.pass;
        summary.push_back({{"criterion", o.id}, {"name", o.name}, {"pass", o.pass}, {"detail", o.detail}, {"data", o.data}});
    }
    fs::create_directories(work);
    std::string tag;
    for (int id : criteria) tag += (tag.empty() ? "" : "_") + std::to_string(id);
    std::ofstream(fs::path(work) / ("acceptance_" + tag + ".json")) << summary.dump(2) << '\n';
    return all ? 0 : 1;
}

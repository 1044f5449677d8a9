#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
};

CliRun run_cli(const std::string& args) {
    const std::string cmd = std::string(MIPNERF_CLI_PATH) + " " + args + " 2>/dev/null";
    CliRun r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t line_count(const std::string& text) { return std::count(text.begin(), text.end(), '\n'); }

// Small but complete pipeline shared by the tests below: an 88 px dataset (the smallest whose
// eighth scale fits the SSIM window) and two short runs.
class CliPipeline : public testing::Test {
  protected:
    static fs::path root;
    static std::string tiny;

    static void SetUpTestSuite() {
        root = fs::temp_directory_path() / "mipnerf_cli_test";
        fs::remove_all(root);
        fs::create_directories(root);
        tiny = "iterations=30 batch_rays=16 warmup_steps=5 degree=6 depth=2 width=16 n_coarse=8 n_fine=8 eval_every=0";
        ASSERT_EQ(run_cli("gen-data --resolution 88 --spp 1 --out " + (root / "data").string()).code, 0);
        for (const char* method : {"mip", "no_ipe"}) {
            const std::string out = (root / method).string();
            ASSERT_EQ(run_cli("train --data " + (root / "data").string() + " --method " + method + " --seed 3 --out " +
                              out + " " + tiny)
                          .code,
                      0);
        }
    }
    static void TearDownTestSuite() { fs::remove_all(root); }
};

fs::path CliPipeline::root;
std::string CliPipeline::tiny;

}  // namespace

TEST(Cli, HelpMatchesSnapshot) {
    const CliRun r = run_cli("--help");
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, slurp(fs::path(MIPNERF_TEST_DATA_DIR) / "cli_help.txt"));
    const CliRun train = run_cli("train --help");
    EXPECT_EQ(train.code, 0);
    EXPECT_EQ(train.out, slurp(fs::path(MIPNERF_TEST_DATA_DIR) / "cli_train_help.txt"));
}

TEST(Cli, Version) {
    const CliRun r = run_cli("--version");
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "mipnerf 1.0\n");
}

TEST(Cli, UsageErrorsExitTwo) {
    const fs::path out = fs::temp_directory_path() / "mipnerf_cli_usage";
    EXPECT_EQ(run_cli("").code, 2);
    EXPECT_EQ(run_cli("fly").code, 2);
    EXPECT_EQ(run_cli("train").code, 2);
    EXPECT_EQ(run_cli("train --out " + out.string() + " iteration=5").code, 2);
    EXPECT_EQ(run_cli("train --out " + out.string() + " --method fancy").code, 2);
    EXPECT_EQ(run_cli("train --out " + out.string() + " --data /nonexistent/dir").code, 2);
    EXPECT_EQ(run_cli("render --out " + out.string() + " --run " + out.string() + "/missing").code, 2);
    EXPECT_EQ(run_cli("verify --out " + out.string() + " --check no_such_check").code, 2);
    fs::remove_all(out);
}

TEST(Cli, VerifySelectedChecksAndMutation) {
    const fs::path out = fs::temp_directory_path() / "mipnerf_cli_verify";
    fs::remove_all(out);
    const CliRun ok = run_cli("verify --out " + out.string() + " --check moments_exact_rational --check ipe_zero_cov_is_pe");
    EXPECT_EQ(ok.code, 0);
    EXPECT_EQ(ok.out.find("PASS moments_exact_rational"), 0u);
    const auto report = nlohmann::json::parse(slurp(out / "verify_report.json"));
    EXPECT_TRUE(report.at("pass").get<bool>());
    EXPECT_EQ(report.at("checks").size(), 2u);
    EXPECT_TRUE(fs::exists(out / "manifest.json"));

    const CliRun bad = run_cli("verify --out " + out.string() +
                            " --mutate-var-t --sample-scale 0.05 --check frustum_moments_mc");
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.out.find("FAIL frustum_moments_mc"), std::string::npos);
    fs::remove_all(out);
}

TEST_F(CliPipeline, TrainWritesArtifacts) {
    for (const char* method : {"mip", "no_ipe"}) {
        const fs::path dir = root / method;
        for (const char* f : {"checkpoint.bin", "checkpoint.bin.json", "train_log.csv", "timing.csv", "manifest.json"})
            EXPECT_TRUE(fs::exists(dir / f)) << f;
        EXPECT_EQ(line_count(slurp(dir / "train_log.csv")), 31u);
        const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
        EXPECT_EQ(manifest.at("seed"), 3);
        EXPECT_EQ(manifest.at("config").at("no_ipe"), std::string(method) == "no_ipe" ? "true" : "false");
    }
}

TEST_F(CliPipeline, TrainIsByteIdentical) {
    const fs::path again = root / "mip_again";
    ASSERT_EQ(run_cli("train --data " + (root / "data").string() + " --method mip --seed 3 --threads 2 --out " +
                      again.string() + " " + tiny)
                  .code,
              0);
    for (const char* f : {"checkpoint.bin", "checkpoint.bin.json", "train_log.csv", "manifest.json"})
        EXPECT_EQ(slurp(again / f), slurp(root / "mip" / f)) << f;
}

TEST_F(CliPipeline, EvalRowsPerScaleAndMethod) {
    const fs::path out = root / "eval";
    const std::string runs = " --run " + (root / "mip").string() + " --run " + (root / "no_ipe").string();
    const CliRun r = run_cli("eval --data " + (root / "data").string() + runs + " --out " + out.string());
    ASSERT_EQ(r.code, 0);
    const std::string csv = slurp(out / "metrics.csv");
    EXPECT_EQ(line_count(csv), 1u + 4 * 2);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "scene,scale,method,psnr,ssim,avg2");
    EXPECT_NE(csv.find("three-spheres,8,no_ipe,"), std::string::npos);

    const fs::path subset = root / "eval_subset";
    ASSERT_EQ(run_cli("eval --data " + (root / "data").string() + runs + " --scales 1 --scales 8 --out " +
                      subset.string())
                  .code,
              0);
    EXPECT_EQ(line_count(slurp(subset / "metrics.csv")), 1u + 2 * 2);

    const fs::path again = root / "eval_again";
    ASSERT_EQ(run_cli("eval --data " + (root / "data").string() + runs + " --out " + again.string()).code, 0);
    EXPECT_EQ(slurp(again / "metrics.csv"), csv);
}

TEST_F(CliPipeline, RenderAtEighthScale) {
    const fs::path out = root / "render";
    ASSERT_EQ(run_cli("render --data " + (root / "data").string() + " --run " + (root / "mip").string() +
                      " --scale 8 --view 1 --out " + out.string())
                  .code,
              0);
    std::ifstream f32(out / "test_r_1_s8.f32", std::ios::binary);
    ASSERT_TRUE(f32);
    std::int32_t w = 0, h = 0;
    f32.read(reinterpret_cast<char*>(&w), 4);
    f32.read(reinterpret_cast<char*>(&h), 4);
    EXPECT_EQ(w, 88 / 8);
    EXPECT_EQ(h, 88 / 8);
    EXPECT_TRUE(fs::exists(out / "test_r_1_s8.png"));
    EXPECT_EQ(line_count(slurp(out / "metrics.csv")), 2u);
}

TEST_F(CliPipeline, SweepIsByteIdentical) {
    const std::string args = "sweep-l --data " + (root / "data").string() + " --L 4,6 --seeds 0 " + tiny;
    ASSERT_EQ(run_cli(args + " --out " + (root / "sweep1").string()).code, 0);
    ASSERT_EQ(run_cli(args + " --out " + (root / "sweep2").string()).code, 0);
    const std::string csv = slurp(root / "sweep1" / "sweep_l.csv");
    EXPECT_EQ(csv, slurp(root / "sweep2" / "sweep_l.csv"));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "variant,L,psnr");
    EXPECT_EQ(line_count(csv), 1u + 2 * 2);
}

TEST_F(CliPipeline, GenDataIsByteIdentical) {
    const fs::path again = root / "data_again";
    ASSERT_EQ(run_cli("gen-data --resolution 88 --spp 1 --out " + again.string()).code, 0);
    for (const char* f : {"transforms_train.json", "transforms_test.json", "train/r_3_s2.png", "test/r_0_s8.f32"})
        EXPECT_EQ(slurp(again / f), slurp(root / "data" / f)) << f;
}

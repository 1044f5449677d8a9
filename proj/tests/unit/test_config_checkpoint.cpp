#include "mipnerf/checkpoint.hpp"
#include "mipnerf/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

using namespace mipnerf;

namespace {

std::filesystem::path scratch_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("mipnerf_test_" + name);
}

}  // namespace

TEST(Config, ParsesCommentsAndWhitespace) {
    std::istringstream in("# desk run\niterations = 100  # short\n\n  lambda=0.5\n");
    const KeyValues kv = parse_key_values(in);
    ASSERT_EQ(kv.size(), 2u);
    TrainConfig c;
    apply_config(c, kv);
    EXPECT_EQ(c.iterations, 100);
    EXPECT_EQ(c.lambda, 0.5);
}

TEST(Config, RejectsUnknownKeyByExactName) {
    TrainConfig c;
    try {
        apply_config(c, {{"iteration", "5"}});
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("'iteration'"), std::string::npos);
    }
    EXPECT_THROW(apply_config(c, {{"Iterations", "5"}}), ConfigError);
}

TEST(Config, RejectsBadValues) {
    TrainConfig c;
    EXPECT_THROW(apply_config(c, {{"iterations", "ten"}}), ConfigError);
    EXPECT_THROW(apply_config(c, {{"iterations", "10x"}}), ConfigError);
    EXPECT_THROW(apply_config(c, {{"no_ipe", "maybe"}}), ConfigError);
    EXPECT_THROW(apply_config(c, {{"encoding", "nerf"}}), ConfigError);
    std::istringstream in("iterations 5\n");
    EXPECT_THROW(parse_key_values(in), ConfigError);
    EXPECT_THROW(parse_override("=3"), ConfigError);
    EXPECT_THROW(parse_override("lambda"), ConfigError);
}

TEST(Config, LaterEntriesWin) {
    TrainConfig c;
    apply_config(c, {{"width", "32"}, {"width", "48"}});
    EXPECT_EQ(c.width, 48);
}

TEST(Config, CanonicalTextRoundTrips) {
    TrainConfig c;
    c.lambda = 0.3;
    c.lr_init = 1.2345678901234567e-3;
    c.encoding = "concat_pe";
    c.two_mlps = true;
    c.seed = 77;
    std::istringstream in(format_config(c));
    TrainConfig d;
    apply_config(d, parse_key_values(in));
    EXPECT_EQ(config_entries(c), config_entries(d));
    EXPECT_EQ(d.lr_init, c.lr_init);
    EXPECT_EQ(config_keys().size(), config_entries(c).size());
}

TEST(Checkpoint, RoundTripsEveryParameter) {
    TrainConfig config;
    config.two_mlps = true;
    config.degree = 8;
    config.width = 32;
    const RadianceModel<float> model = make_model(config);
    const auto path = scratch_file("ckpt.bin");
    save_checkpoint(path, model);
    const RadianceModel<float> loaded = load_checkpoint(path);
    EXPECT_EQ(loaded.encoding.degree, 8);
    EXPECT_EQ(loaded.encoding.variant, EncodingVariant::Ipe);
    ASSERT_EQ(loaded.mlps.size(), 2u);
    for (std::size_t m = 0; m < 2; ++m) {
        EXPECT_EQ(loaded.mlps[m].layout(), model.mlps[m].layout());
        EXPECT_TRUE(std::equal(model.mlps[m].parameters().begin(), model.mlps[m].parameters().end(),
                               loaded.mlps[m].parameters().begin()));
    }
    const auto sidecar = nlohmann::json::parse(std::ifstream(path.string() + ".json"));
    EXPECT_EQ(sidecar.at("mlps").size(), 2u);
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".json");
}

TEST(Checkpoint, RejectsCorruptFiles) {
    const auto path = scratch_file("bad.bin");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTACKPT and some more bytes";
    }
    EXPECT_THROW(load_checkpoint(path), std::runtime_error);

    save_checkpoint(path, make_model(TrainConfig{}));
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 10);
    EXPECT_THROW(load_checkpoint(path), std::runtime_error);
    EXPECT_THROW(load_checkpoint(scratch_file("missing.bin")), std::runtime_error);
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".json");
}

#include "mipnerf/checkpoint.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mipnerf {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
    return value;
}

}  // namespace

std::string checkpoint_sidecar_json(const RadianceModel<float>& model) {
    const MlpLayout& l = model.coarse().layout();
    nlohmann::ordered_json doc;
    doc["format"] = "mipnerf-checkpoint";
    doc["version"] = kCheckpointVersion;
    doc["encoding"] = {{"degree", model.encoding.degree},
                       {"view_degree", model.encoding.view_degree},
                       {"variant", to_string(model.encoding.variant)}};
    doc["layout"] = {{"input_dim", l.input_dim}, {"view_dim", l.view_dim},   {"depth", l.depth},
                     {"width", l.width},         {"skip_layer", l.skip_layer}, {"view_width", l.view_width}};
    doc["mlps"] = nlohmann::ordered_json::array();
    for (const auto& mlp : model.mlps) {
        nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
        for (const DenseSlice& s : mlp.slices())
            tensors.push_back({{"name", s.name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols}});
        doc["mlps"].push_back({{"parameter_count", mlp.parameter_count()}, {"tensors", tensors}});
    }
    return doc.dump(2) + "\n";
}

void save_checkpoint(const std::filesystem::path& path, const RadianceModel<float>& model) {
    if (model.mlps.empty()) throw std::invalid_argument("cannot save an empty model");
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + path.string());
        out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
        put<std::uint32_t>(out, kCheckpointVersion);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(model.mlps.size()));
        put<std::int32_t>(out, model.encoding.degree);
        put<std::int32_t>(out, model.encoding.view_degree);
        put<std::int32_t>(out, static_cast<std::int32_t>(model.encoding.variant));
        const MlpLayout& l = model.coarse().layout();
        for (int v : {l.input_dim, l.view_dim, l.depth, l.width, l.skip_layer, l.view_width}) put<std::int32_t>(out, v);
        for (const auto& mlp : model.mlps) {
            const auto params = mlp.parameters();
            put<std::uint64_t>(out, params.size());
            out.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size_bytes()));
        }
        if (!out.flush()) throw std::runtime_error("failed to write " + path.string());
    }
    std::ofstream side(path.string() + ".json", std::ios::trunc);
    side << checkpoint_sidecar_json(model);
    if (!side.flush()) throw std::runtime_error("failed to write sidecar for " + path.string());
}

RadianceModel<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error(path.string() + " is not a mipnerf checkpoint");
    const auto version = get<std::uint32_t>(in, path);
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const auto count = get<std::uint32_t>(in, path);
    if (count != 1 && count != 2) throw std::runtime_error("checkpoint must hold 1 or 2 MLPs");

    RadianceModel<float> model;
    model.encoding.degree = get<std::int32_t>(in, path);
    model.encoding.view_degree = get<std::int32_t>(in, path);
    const auto variant = get<std::int32_t>(in, path);
    if (variant < 0 || variant > static_cast<int>(EncodingVariant::ConcatPe))
        throw std::runtime_error("bad encoding variant in checkpoint");
    model.encoding.variant = static_cast<EncodingVariant>(variant);
    model.encoding.validate();

    MlpLayout layout;
    layout.input_dim = get<std::int32_t>(in, path);
    layout.view_dim = get<std::int32_t>(in, path);
    layout.depth = get<std::int32_t>(in, path);
    layout.width = get<std::int32_t>(in, path);
    layout.skip_layer = get<std::int32_t>(in, path);
    layout.view_width = get<std::int32_t>(in, path);
    layout.validate();

    for (std::uint32_t m = 0; m < count; ++m) {
        RadianceMlp<float> mlp(layout);
        const auto n = get<std::uint64_t>(in, path);
        if (n != mlp.parameter_count())
            throw std::runtime_error("checkpoint parameter count " + std::to_string(n) + " does not match layout (" +
                                     std::to_string(mlp.parameter_count()) + ")");
        auto params = mlp.parameters();
        in.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(params.size_bytes()));
        if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
        model.mlps.push_back(std::move(mlp));
    }
    return model;
}

}  // namespace mipnerf

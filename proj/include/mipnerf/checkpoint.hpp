#pragma once

#include "mipnerf/field.hpp"

#include <filesystem>
#include <string>

namespace mipnerf {

inline constexpr char kCheckpointMagic[8] = {'M', 'I', 'P', 'N', 'E', 'R', 'F', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (little endian): magic[8], u32 version, u32 mlp count, i32 degree,
/// i32 view degree, i32 variant, i32 x6 layout (input, view, depth, width, skip,
/// view width), then per MLP a u64 parameter count followed by float32 values in
/// slice order. A JSON sidecar (<path>.json) repeats the header and slice table.
void save_checkpoint(const std::filesystem::path& path, const RadianceModel<float>& model);

/// Throws std::runtime_error on a bad magic, unsupported version or truncated file.
RadianceModel<float> load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_sidecar_json(const RadianceModel<float>& model);

}  // namespace mipnerf

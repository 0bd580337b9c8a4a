// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "gazessl/nn/model.hpp"

namespace gazessl::nn {

inline constexpr char kCheckpointMagic[8] = {'G', 'Z', 'S', 'S', 'L', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: magic, u32 version, u32 count, then per parameter u32 name length,
/// name bytes, u8 dtype (0 = f32), u32 rank, u64 dims, f32 payload. All
/// integers and floats little-endian. Written to a temp file then renamed.
void save_checkpoint(const ParamList& params, const std::filesystem::path& path);

/// Raw contents as named tensors.
std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::filesystem::path& path);

/// Loads into `params` by name; every parameter must be present with a
/// matching shape.
void load_checkpoint(ParamList& params, const std::filesystem::path& path);

}  // namespace gazessl::nn

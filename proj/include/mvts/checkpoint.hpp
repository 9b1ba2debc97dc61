#pragma once

// Checkpoint layout (all integers little-endian):
//   "MVTS" | u16 version | config block | u32 array count |
//   per array: u32 name length, name bytes, u32 rank, rank × u64 dims,
//              product(dims) × f32
// The config block is T, M, D, H, D_q, D_v, layers, ffn_width as u64, then
// dropout_rate as f64 and seed as u64. Arrays are the trainable tensors in
// ModelParams::named_parameters() order followed by the norm running
// statistics.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mvts/model.hpp"

namespace mvts {

inline constexpr char kCheckpointMagic[4] = {'M', 'V', 'T', 'S'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<unsigned char> serialize_checkpoint(const ModelParams<float>& params);
ModelParams<float> deserialize_checkpoint(std::vector<unsigned char> bytes, const std::string& source,
                                          const std::optional<ModelConfig>& expected = std::nullopt);

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path);

/// Throws FormatError on bad magic/version/truncation (with byte offset) and
/// on a config that differs from `expected`.
ModelParams<float> load_checkpoint(const std::filesystem::path& path,
                                   const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace mvts

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "diunet/model.hpp"

namespace diunet {

inline constexpr std::uint16_t kModelFormatVersion = 1;

/// Model container, little-endian throughout:
///   "DIUN", u16 version,
///   config: u32 depth, base_filters, N, M, D, K; u8 variant (0 dilated, 1 baseline)
///   u32 parameter count, then per parameter in build order:
///     u32 name length, name bytes, u32 ndim, u32 dims[ndim], f32 data
///   u32 buffer count, then buffer records in the same layout
///     (input normalisation and batch-norm running statistics).
std::vector<std::uint8_t> encode_model(Model<float>& model);
Model<float> decode_model(std::span<const std::uint8_t> bytes);

void save_model(const std::filesystem::path& path, Model<float>& model);
Model<float> load_model(const std::filesystem::path& path);

}  // namespace diunet

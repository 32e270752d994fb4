#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lctem/unet.hpp"

namespace lctem {

/// Byte layout, all integers little-endian:
///   "LCTM" | u32 version | u32 n + n bytes config record (key=value lines,
///   model keys plus step=<adam steps>) | records... | u32 CRC32 of every
///   preceding byte.
/// A record is u32 n + n bytes name | u8 rank | rank x u32 dims | f32 values.
/// Records cover parameters, normalization buffers and, when present, the
/// Adam moments under "adam.m.<name>" and "adam.v.<name>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Scalar>
std::vector<unsigned char> serialize_checkpoint(const UNet<Scalar>& model);

/// Builds a fresh model from the embedded config and fills it. Any problem
/// throws CheckpointError before a model is returned.
template <typename Scalar>
UNet<Scalar> parse_checkpoint(std::span<const unsigned char> bytes);

template <typename Scalar>
void save_checkpoint(const UNet<Scalar>& model, const std::filesystem::path& path);

template <typename Scalar>
UNet<Scalar> load_checkpoint(const std::filesystem::path& path);

extern template std::vector<unsigned char> serialize_checkpoint(const UNet<float>&);
extern template std::vector<unsigned char> serialize_checkpoint(const UNet<double>&);
extern template UNet<float> parse_checkpoint(std::span<const unsigned char>);
extern template UNet<double> parse_checkpoint(std::span<const unsigned char>);
extern template void save_checkpoint(const UNet<float>&, const std::filesystem::path&);
extern template void save_checkpoint(const UNet<double>&, const std::filesystem::path&);
extern template UNet<float> load_checkpoint(const std::filesystem::path&);
extern template UNet<double> load_checkpoint(const std::filesystem::path&);

}  // namespace lctem

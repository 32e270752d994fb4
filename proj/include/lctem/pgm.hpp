#pragma once

#include <filesystem>

#include "lctem/micrograph.hpp"

namespace lctem {

/// Reads a binary P5 PGM (maxval 255 or 65535, 16-bit samples big-endian).
/// Metadata comes from `<stem>.meta` next to the file when present.
Micrograph load_pgm(const std::filesystem::path& path);

/// Parses an in-memory P5 file; used by load_pgm.
CountArray parse_pgm(std::span<const unsigned char> bytes);

/// Writes a 16-bit P5 PGM. Round trip through load_pgm is bit-identical.
void save_pgm(const Micrograph& img, const std::filesystem::path& path);

/// Quantizes round(v * 65535) and writes a 16-bit P5 PGM.
void save_pgm(const NormalizedImage& img, const std::filesystem::path& path);

/// `<stem>.meta` for a given image path.
std::filesystem::path sidecar_path(const std::filesystem::path& image_path);

/// key=value sidecar with pixel_size_nm, exposure_s, dose_rate_e_per_nm2_s,
/// magnification, conversion_gain. Unknown keys are rejected.
MicrographMeta load_sidecar(const std::filesystem::path& path);
void save_sidecar(const MicrographMeta& meta, const std::filesystem::path& path);

}  // namespace lctem

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lctem/micrograph.hpp"

namespace lctem {

struct ManifestEntry {
  std::string id;
  std::filesystem::path noisy_path;  ///< resolved against the manifest directory
  std::filesystem::path truth_path;
  double noisy_dose = 0.0;
  double truth_dose = 0.0;
};

/// CSV with header `id,noisy_path,truth_path,noisy_dose,truth_dose`.
/// Errors name the offending row (1-based, header is row 1).
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

/// Writes the manifest with paths relative to the manifest directory.
void save_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

/// Loads every pair, area-resizes to size x size (size <= 0 keeps the stored
/// size) and min-max rescales both images.
std::vector<PairedSample> load_pairs(const std::vector<ManifestEntry>& entries, int size);

/// Saves pairs as 16-bit PGMs plus a manifest in `dir`.
void save_pairs(const std::vector<PairedSample>& pairs, const std::filesystem::path& dir);

}  // namespace lctem

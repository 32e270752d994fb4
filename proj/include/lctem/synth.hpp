#pragma once

#include <cstdint>
#include <vector>

#include "lctem/micrograph.hpp"

namespace lctem {

/// Degradation applied to a clean particle scene to produce the noisy image:
/// noisy = clip(gain * blur(truth) + background + shot noise).
struct DegradeSpec {
  double blur_sigma_px = 1.2;  ///< Gaussian blur at 64 px; scales with image size
  double gain = 0.4;
  double background = 0.3;
  /// Expected detected counts per unit intensity at 1 e/nm^2. Zero disables noise.
  double counts_per_dose = 2.0;
  double dose_lo = 3.0;  ///< noisy-image dose range, e/nm^2 (log-uniform)
  double dose_hi = 8.0;
  double dose_ratio = 100.0;  ///< truth dose / noisy dose

  static DegradeSpec identity();
  void validate() const;
};

/// Bright discs and polygons on a dark background, degraded by `spec`.
/// Bit-identical for a given (seed, size, spec).
PairedSample synth_pair(std::uint64_t seed, int size, const DegradeSpec& spec = {});

/// `count` pairs with ids syn0000.. drawn from per-pair seeds derived from `seed`.
std::vector<PairedSample> synth_dataset(int count, int size, std::uint64_t seed, const DegradeSpec& spec = {});

/// Clean scene only: antialiased particles at levels 0.7..1 on zero background.
ImageArray particle_scene(std::uint64_t seed, int size);

/// Separable Gaussian blur with clamped borders, kernel truncated at 3 sigma.
ImageArray gaussian_blur(const ImageArray& img, double sigma);

}  // namespace lctem

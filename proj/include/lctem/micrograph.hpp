#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lctem {

/// Row-major real image: rows are y, columns are x.
using ImageArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CountArray = Eigen::Array<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MicrographMeta {
  double pixel_size_nm = 1.0;
  double exposure_s = 1.0;
  std::optional<double> dose_rate;  ///< electrons / (nm^2 s)
  std::optional<double> magnification;
  std::optional<double> conversion_gain;  ///< detector counts per electron

  void validate() const;
};

/// 16-bit detector frame plus acquisition metadata.
class Micrograph {
 public:
  Micrograph(CountArray counts, MicrographMeta meta = {});

  int width() const { return static_cast<int>(counts_.cols()); }
  int height() const { return static_cast<int>(counts_.rows()); }
  const CountArray& counts() const { return counts_; }
  const MicrographMeta& meta() const { return meta_; }

 private:
  CountArray counts_;
  MicrographMeta meta_;
};

/// Real-valued image with every sample in [0, 1].
class NormalizedImage {
 public:
  /// Throws InputError if any value is outside [0, 1] or non-finite.
  explicit NormalizedImage(ImageArray values);
  NormalizedImage(int width, int height, double fill = 0.0);

  /// Clamps into [0, 1] instead of rejecting (NaN becomes 0).
  static NormalizedImage clamped(ImageArray values);

  int width() const { return static_cast<int>(values_.cols()); }
  int height() const { return static_cast<int>(values_.rows()); }
  const ImageArray& values() const { return values_; }
  double operator()(int y, int x) const { return values_(y, x); }

  friend bool operator==(const NormalizedImage& a, const NormalizedImage& b) {
    return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
           (a.values_ == b.values_).all();
  }

 private:
  ImageArray values_;
};

/// One training unit: noisy solution image (S) and dry ground truth (T).
struct PairedSample {
  NormalizedImage noisy;
  NormalizedImage truth;
  double noisy_dose = 0.0;  ///< electrons / nm^2
  double truth_dose = 0.0;
  std::string id;

  PairedSample(NormalizedImage noisy_image, NormalizedImage truth_image, double noisy_e,
               double truth_e, std::string pair_id);
};

// ---------------------------------------------------------------------------
// Transforms

/// Pixel-area-overlap resampling (INTER_AREA semantics). Every output pixel is
/// the area-weighted mean of the source pixels under its footprint.
ImageArray area_resize(const ImageArray& src, int new_width, int new_height);
NormalizedImage area_resize(const NormalizedImage& img, int new_width, int new_height);

/// Min-max map to [0, 1]; a constant image maps to all zeros.
ImageArray rescale_intensity(const ImageArray& values);
NormalizedImage rescale_intensity(const Micrograph& img);

enum class FlipAxis { Horizontal, Vertical };

NormalizedImage flip(const NormalizedImage& img, FlipAxis axis);

/// 2x2 tiling in argument order: top-left, top-right, bottom-left, bottom-right.
NormalizedImage mosaic4(const NormalizedImage& top_left, const NormalizedImage& top_right,
                        const NormalizedImage& bottom_left, const NormalizedImage& bottom_right);

/// Quadrant q (0..3, same order as mosaic4) of an even-sized image.
NormalizedImage quadrant(const NormalizedImage& img, int q);

// ---------------------------------------------------------------------------
// Dose accounting

/// Total dose in electrons / nm^2. Uses dose_rate * exposure when the dose
/// rate is known, otherwise the mean count divided by conversion_gain and the
/// pixel area. Throws MetadataError if neither is available.
double total_dose(const Micrograph& img);

struct Histogram {
  std::vector<double> edges;  ///< size = counts.size() + 1
  std::vector<std::size_t> counts;

  std::size_t total() const;
};

/// Log-spaced bins covering [lo, hi). Values below lo or at/above hi are
/// counted in the first and last bin so the total matches the input count.
struct LogBins {
  double lo = 0.1;
  double hi = 1e4;
  int bins = 5;
};

/// Throws InputError on a non-positive dose.
Histogram dose_histogram(std::span<const double> doses, const LogBins& bins);

/// Linear histogram on explicit edges; the last bin is closed on the right
/// and out-of-range values fall into the end bins.
Histogram linear_histogram(std::span<const double> values, std::vector<double> edges);

}  // namespace lctem

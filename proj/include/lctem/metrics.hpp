#pragma once

#include <optional>

#include "lctem/micrograph.hpp"

namespace lctem {

enum class VarianceNormalization { Unbiased, Biased };

/// Windowed-statistics configuration. Stabilizers follow the common
/// convention c1 = (k1 L)^2, c2 = (k2 L)^2; `literal_constants` uses k1, k2
/// directly as c1, c2 instead.
struct SsimConfig {
  int window_size = 11;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
  bool literal_constants = false;
  VarianceNormalization normalization = VarianceNormalization::Unbiased;

  double c1() const;
  double c2() const;
  /// Throws InputError on an invalid window or constants, ShapeError if the
  /// window does not fit a width x height image.
  void validate(int width, int height) const;
};

struct SsimResult {
  double mean = 0.0;
  ImageArray map;  ///< (height - w + 1) x (width - w + 1) window anchors
  long n_windows = 0;
};

/// SSIM of two equally sized w x w windows.
double local_ssim(const ImageArray& x_window, const ImageArray& y_window, const SsimConfig& cfg = {});

/// Stride-1 valid-mode SSIM map and its mean.
SsimResult ssim(const NormalizedImage& x, const NormalizedImage& y, const SsimConfig& cfg = {});
SsimResult ssim(const ImageArray& x, const ImageArray& y, const SsimConfig& cfg = {});

/// 1 - mean SSIM.
double ssim_loss(const NormalizedImage& x, const NormalizedImage& y, const SsimConfig& cfg = {});

/// PSNR in dB. Identical images have no finite PSNR and yield the
/// unbounded value, which refuses to convert to a number.
class Psnr {
 public:
  static Psnr unbounded() { return Psnr(); }
  static Psnr decibels(double db) { return Psnr(db); }

  bool is_unbounded() const { return !db_.has_value(); }
  /// Throws InputError when unbounded.
  double db() const;
  /// "inf" or the shortest round-trip decimal.
  std::string to_string() const;

 private:
  Psnr() = default;
  explicit Psnr(double db) : db_(db) {}
  std::optional<double> db_;
};

Psnr psnr(const NormalizedImage& x, const NormalizedImage& y, double data_range = 1.0);
Psnr psnr(const ImageArray& x, const ImageArray& y, double data_range = 1.0);

double l1_loss(const NormalizedImage& x, const NormalizedImage& y);
double l2_loss(const NormalizedImage& x, const NormalizedImage& y);

}  // namespace lctem

#include "lctem/metrics.hpp"

#include <cmath>
#include <span>

#include "lctem/error.hpp"
#include "lctem/ssim_kernels.hpp"
#include "lctem/summation.hpp"
#include "lctem/text.hpp"

namespace lctem {

double SsimConfig::c1() const { return literal_constants ? k1 : (k1 * data_range) * (k1 * data_range); }
double SsimConfig::c2() const { return literal_constants ? k2 : (k2 * data_range) * (k2 * data_range); }

void SsimConfig::validate(int width, int height) const {
  if (window_size < 3 || window_size % 2 == 0)
    throw InputError("SSIM window size must be odd and at least 3");
  if (!(k1 > 0.0) || !(k2 > 0.0) || !(data_range > 0.0))
    throw InputError("SSIM constants k1, k2 and data range must be positive");
  if (window_size > width || window_size > height)
    throw ShapeError("SSIM window " + std::to_string(window_size) + " does not fit a " +
                     std::to_string(width) + "x" + std::to_string(height) + " image");
}

namespace {

detail::SsimConstants<double> constants(const SsimConfig& cfg) {
  return {cfg.window_size, cfg.c1(), cfg.c2(),
          cfg.normalization == VarianceNormalization::Unbiased};
}

void require_same_shape(const ImageArray& x, const ImageArray& y, const char* op) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw ShapeError(std::string(op) + ": image dimensions differ");
}

double mean_of(const ImageArray& a) {
  return pairwise_mean(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
}

}  // namespace

double local_ssim(const ImageArray& xw, const ImageArray& yw, const SsimConfig& cfg) {
  require_same_shape(xw, yw, "local_ssim");
  if (xw.rows() != cfg.window_size || xw.cols() != cfg.window_size)
    throw ShapeError("local_ssim: window must be window_size x window_size");
  cfg.validate(cfg.window_size, cfg.window_size);
  return detail::ssim_maps<double>(xw, yw, constants(cfg)).map(0, 0);
}

SsimResult ssim(const ImageArray& x, const ImageArray& y, const SsimConfig& cfg) {
  require_same_shape(x, y, "ssim");
  cfg.validate(static_cast<int>(x.cols()), static_cast<int>(x.rows()));
  SsimResult r;
  r.map = detail::ssim_maps<double>(x, y, constants(cfg)).map;
  r.n_windows = static_cast<long>(r.map.size());
  r.mean = mean_of(r.map);
  return r;
}

SsimResult ssim(const NormalizedImage& x, const NormalizedImage& y, const SsimConfig& cfg) {
  return ssim(x.values(), y.values(), cfg);
}

double ssim_loss(const NormalizedImage& x, const NormalizedImage& y, const SsimConfig& cfg) {
  return 1.0 - ssim(x, y, cfg).mean;
}

double Psnr::db() const {
  if (!db_) throw InputError("PSNR of identical images is unbounded");
  return *db_;
}

std::string Psnr::to_string() const { return db_ ? format_real(*db_) : "inf"; }

Psnr psnr(const ImageArray& x, const ImageArray& y, double data_range) {
  require_same_shape(x, y, "psnr");
  const double mse = mean_of((x - y).square());
  if (mse == 0.0) return Psnr::unbounded();
  return Psnr::decibels(10.0 * std::log10(data_range * data_range / mse));
}

Psnr psnr(const NormalizedImage& x, const NormalizedImage& y, double data_range) {
  return psnr(x.values(), y.values(), data_range);
}

double l1_loss(const NormalizedImage& x, const NormalizedImage& y) {
  require_same_shape(x.values(), y.values(), "l1_loss");
  return mean_of((x.values() - y.values()).abs());
}

double l2_loss(const NormalizedImage& x, const NormalizedImage& y) {
  require_same_shape(x.values(), y.values(), "l2_loss");
  return mean_of((x.values() - y.values()).square());
}

}  // namespace lctem

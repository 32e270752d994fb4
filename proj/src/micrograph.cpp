#include "lctem/micrograph.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseCore>

#include "lctem/error.hpp"

namespace lctem {

void MicrographMeta::validate() const {
  if (!(pixel_size_nm > 0.0)) throw MetadataError("pixel_size_nm must be positive");
  if (!(exposure_s > 0.0)) throw MetadataError("exposure_s must be positive");
  if (dose_rate && !(*dose_rate >= 0.0)) throw MetadataError("dose_rate must be non-negative");
  if (conversion_gain && !(*conversion_gain > 0.0))
    throw MetadataError("conversion_gain must be positive");
}

Micrograph::Micrograph(CountArray counts, MicrographMeta meta)
    : counts_(std::move(counts)), meta_(std::move(meta)) {
  if (counts_.rows() < 1 || counts_.cols() < 1) throw ShapeError("micrograph must be at least 1x1");
  meta_.validate();
}

NormalizedImage::NormalizedImage(ImageArray values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1) throw ShapeError("image must be at least 1x1");
  if (!(values_ >= 0.0 && values_ <= 1.0).all())
    throw InputError("normalized image values must lie in [0, 1]");
}

NormalizedImage::NormalizedImage(int width, int height, double fill)
    : NormalizedImage(ImageArray::Constant(height, width, fill)) {}

NormalizedImage NormalizedImage::clamped(ImageArray values) {
  values = values.unaryExpr([](double v) { return std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0); });
  return NormalizedImage(std::move(values));
}

PairedSample::PairedSample(NormalizedImage noisy_image, NormalizedImage truth_image, double noisy_e,
                           double truth_e, std::string pair_id)
    : noisy(std::move(noisy_image)),
      truth(std::move(truth_image)),
      noisy_dose(noisy_e),
      truth_dose(truth_e),
      id(std::move(pair_id)) {
  if (noisy.width() != truth.width() || noisy.height() != truth.height())
    throw ShapeError("pair '" + id + "': noisy and truth sizes differ");
  if (!(noisy_dose >= 0.0) || !(truth_dose >= 0.0))
    throw InputError("pair '" + id + "': doses must be non-negative");
}

namespace {

using SparseRowMajor = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Row i holds the fraction of output cell i covered by each source pixel.
SparseRowMajor area_weights(int src, int dst) {
  const double scale = static_cast<double>(src) / dst;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(dst) * (static_cast<std::size_t>(scale) + 2));
  for (int i = 0; i < dst; ++i) {
    const double lo = i * scale;
    const double hi = (i + 1) * scale;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(src - 1, static_cast<int>(std::ceil(hi)) - 1);
    for (int j = first; j <= last; ++j) {
      const double overlap = std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j));
      if (overlap > 0.0) triplets.emplace_back(i, j, overlap / scale);
    }
  }
  SparseRowMajor w(dst, src);
  w.setFromTriplets(triplets.begin(), triplets.end());
  return w;
}

}  // namespace

ImageArray area_resize(const ImageArray& src, int new_width, int new_height) {
  if (new_width < 1 || new_height < 1) throw ShapeError("area_resize: target must be at least 1x1");
  if (new_width == src.cols() && new_height == src.rows()) return src;
  const SparseRowMajor wy = area_weights(static_cast<int>(src.rows()), new_height);
  const SparseRowMajor wx = area_weights(static_cast<int>(src.cols()), new_width);
  Eigen::MatrixXd rows_done = wy * src.matrix();
  Eigen::MatrixXd out = (wx * rows_done.transpose()).transpose();
  return out.array();
}

NormalizedImage area_resize(const NormalizedImage& img, int new_width, int new_height) {
  return NormalizedImage::clamped(area_resize(img.values(), new_width, new_height));
}

ImageArray rescale_intensity(const ImageArray& values) {
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  if (!(hi > lo)) return ImageArray::Zero(values.rows(), values.cols());
  ImageArray out = (values - lo) / (hi - lo);
  // Division can land one ulp outside the range at the endpoints.
  return out.min(1.0).max(0.0);
}

NormalizedImage rescale_intensity(const Micrograph& img) {
  return NormalizedImage(rescale_intensity(ImageArray(img.counts().cast<double>())));
}

NormalizedImage flip(const NormalizedImage& img, FlipAxis axis) {
  if (axis == FlipAxis::Horizontal) return NormalizedImage(img.values().rowwise().reverse());
  return NormalizedImage(img.values().colwise().reverse());
}

NormalizedImage mosaic4(const NormalizedImage& top_left, const NormalizedImage& top_right,
                        const NormalizedImage& bottom_left, const NormalizedImage& bottom_right) {
  const int w = top_left.width();
  const int h = top_left.height();
  for (const auto* t : {&top_right, &bottom_left, &bottom_right}) {
    if (t->width() != w || t->height() != h) throw ShapeError("mosaic4: tiles differ in size");
  }
  ImageArray out(2 * h, 2 * w);
  out.topLeftCorner(h, w) = top_left.values();
  out.topRightCorner(h, w) = top_right.values();
  out.bottomLeftCorner(h, w) = bottom_left.values();
  out.bottomRightCorner(h, w) = bottom_right.values();
  return NormalizedImage(std::move(out));
}

NormalizedImage quadrant(const NormalizedImage& img, int q) {
  if (img.width() % 2 != 0 || img.height() % 2 != 0)
    throw ShapeError("quadrant: image dimensions must be even");
  if (q < 0 || q > 3) throw InputError("quadrant index must be 0..3");
  const int w = img.width() / 2;
  const int h = img.height() / 2;
  return NormalizedImage(img.values().block((q / 2) * h, (q % 2) * w, h, w));
}

double total_dose(const Micrograph& img) {
  const auto& m = img.meta();
  if (m.dose_rate) return *m.dose_rate * m.exposure_s;
  if (m.conversion_gain) {
    const double mean_counts = img.counts().cast<double>().mean();
    return mean_counts / *m.conversion_gain / (m.pixel_size_nm * m.pixel_size_nm);
  }
  throw MetadataError("total_dose: neither dose_rate nor conversion_gain is set");
}

std::size_t Histogram::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

namespace {

std::size_t bin_index(const std::vector<double>& edges, double v) {
  const auto nbins = edges.size() - 1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), v);
  if (it == edges.begin()) return 0;
  const auto idx = static_cast<std::size_t>(it - edges.begin()) - 1;
  return std::min(idx, nbins - 1);
}

}  // namespace

Histogram dose_histogram(std::span<const double> doses, const LogBins& bins) {
  if (!(bins.lo > 0.0) || !(bins.hi > bins.lo) || bins.bins < 1)
    throw InputError("dose_histogram: invalid log bins");
  Histogram h;
  const double llo = std::log10(bins.lo);
  const double lhi = std::log10(bins.hi);
  for (int i = 0; i <= bins.bins; ++i)
    h.edges.push_back(std::pow(10.0, llo + (lhi - llo) * i / bins.bins));
  h.edges.front() = bins.lo;
  h.edges.back() = bins.hi;
  h.counts.assign(static_cast<std::size_t>(bins.bins), 0);
  for (double d : doses) {
    if (!(d > 0.0)) throw InputError("dose_histogram: dose must be positive for log binning");
    // Compare in log space so decade edges like 10 and 100 bin exactly.
    const double pos = (std::log10(d) - llo) / (lhi - llo) * bins.bins;
    const double snapped = std::round(pos);
    const double p = std::abs(pos - snapped) < 1e-9 ? snapped : std::floor(pos);
    const auto idx = static_cast<long>(std::clamp(p, 0.0, static_cast<double>(bins.bins - 1)));
    ++h.counts[static_cast<std::size_t>(idx)];
  }
  return h;
}

Histogram linear_histogram(std::span<const double> values, std::vector<double> edges) {
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()))
    throw InputError("linear_histogram: need at least two ascending edges");
  Histogram h;
  h.edges = std::move(edges);
  h.counts.assign(h.edges.size() - 1, 0);
  for (double v : values) ++h.counts[bin_index(h.edges, v)];
  return h;
}

}  // namespace lctem

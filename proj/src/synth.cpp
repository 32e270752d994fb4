#include "lctem/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "lctem/error.hpp"
#include "lctem/random.hpp"

namespace lctem {

namespace {

struct Shape2 {
  double cx, cy, r;
  int sides;  // 0 = disc
  double phase;
  std::vector<double> radii;
};

bool inside(const Shape2& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy;
  if (dx * dx + dy * dy > s.r * s.r) return false;
  if (s.sides == 0) return true;
  // star-shaped polygon around the centre; test against the edge of the sector
  double ang = std::atan2(dy, dx) - s.phase;
  const double sector = 2 * std::numbers::pi / s.sides;
  ang = std::fmod(ang, 2 * std::numbers::pi);
  if (ang < 0) ang += 2 * std::numbers::pi;
  const int k = std::min(static_cast<int>(ang / sector), s.sides - 1);
  const double a0 = k * sector, a1 = (k + 1) * sector;
  const double r0 = s.radii[static_cast<std::size_t>(k)];
  const double r1 = s.radii[static_cast<std::size_t>((k + 1) % s.sides)];
  const double x0 = r0 * std::cos(a0), y0 = r0 * std::sin(a0);
  const double x1 = r1 * std::cos(a1), y1 = r1 * std::sin(a1);
  const double px = std::hypot(dx, dy) * std::cos(ang), py = std::hypot(dx, dy) * std::sin(ang);
  // same side of edge (x0,y0)-(x1,y1) as the origin
  const double cross_p = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
  const double cross_o = (x1 - x0) * (0 - y0) - (y1 - y0) * (0 - x0);
  return cross_p * cross_o >= 0;
}

ImageArray render_scene(Rng& rng, int size) {
  const double scale = size / 64.0;
  const int count = 3 + static_cast<int>(rng.below(6));
  std::vector<Shape2> shapes;
  for (int i = 0; i < count; ++i) {
    Shape2 s;
    s.r = rng.uniform(3.0, 8.0) * scale;
    s.cx = rng.uniform(0, size);
    s.cy = rng.uniform(0, size);
    s.sides = rng.bernoulli(0.5) ? 0 : 5 + static_cast<int>(rng.below(4));
    s.phase = rng.uniform(0, 2 * std::numbers::pi);
    for (int k = 0; k < s.sides; ++k) s.radii.push_back(s.r * rng.uniform(0.75, 1.0));
    shapes.push_back(std::move(s));
  }
  std::vector<double> level(shapes.size());
  for (auto& l : level) l = rng.uniform(0.7, 1.0);
  // 4x4 supersampling for antialiased edges
  constexpr int ss = 4;
  ImageArray img = ImageArray::Zero(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          const double px = x + (sx + 0.5) / ss, py = y + (sy + 0.5) / ss;
          double v = 0.0;
          for (std::size_t i = 0; i < shapes.size(); ++i)
            if (inside(shapes[i], px, py)) v = std::max(v, level[i]);
          acc += v;
        }
      img(y, x) = acc / (ss * ss);
    }
  return img;
}

}  // namespace

DegradeSpec DegradeSpec::identity() {
  DegradeSpec d;
  d.blur_sigma_px = 0.0;
  d.gain = 1.0;
  d.background = 0.0;
  d.counts_per_dose = 0.0;
  return d;
}

void DegradeSpec::validate() const {
  if (!(blur_sigma_px >= 0.0) || !(gain >= 0.0) || !std::isfinite(background) || !(counts_per_dose >= 0.0))
    throw InputError("degrade spec: blur, gain and counts_per_dose must be non-negative");
  if (!(dose_lo > 0.0) || !(dose_hi >= dose_lo)) throw InputError("degrade spec: need 0 < dose_lo <= dose_hi");
  if (!(dose_ratio >= 1.0)) throw InputError("degrade spec: dose_ratio must be >= 1");
}

ImageArray gaussian_blur(const ImageArray& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int rad = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * rad + 1));
  double sum = 0.0;
  for (int i = -rad; i <= rad; ++i) sum += k[static_cast<std::size_t>(i + rad)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  ImageArray tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -rad; i <= rad; ++i) acc += k[static_cast<std::size_t>(i + rad)] * img(y, std::clamp(x + i, 0, w - 1));
      tmp(y, x) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -rad; i <= rad; ++i) acc += k[static_cast<std::size_t>(i + rad)] * tmp(std::clamp(y + i, 0, h - 1), x);
      out(y, x) = acc;
    }
  return out;
}

ImageArray particle_scene(std::uint64_t seed, int size) {
  if (size < 1) throw ShapeError("particle_scene: size must be positive");
  Rng rng(mix_seed(seed, 0));
  return render_scene(rng, size);
}

PairedSample synth_pair(std::uint64_t seed, int size, const DegradeSpec& spec) {
  if (size < 32) throw ShapeError("synth_pair: size must be at least 32");
  spec.validate();
  Rng rng(mix_seed(seed, 0));
  ImageArray truth = render_scene(rng, size);
  const double dose = rng.log_uniform(spec.dose_lo, spec.dose_hi);
  ImageArray signal = spec.gain * gaussian_blur(truth, spec.blur_sigma_px * size / 64.0) + spec.background;
  if (spec.counts_per_dose > 0.0) {
    Rng noise(mix_seed(seed, 1));
    const double per_unit = spec.counts_per_dose * dose;
    for (Eigen::Index i = 0; i < signal.size(); ++i)
      signal.data()[i] = static_cast<double>(noise.poisson(std::max(0.0, signal.data()[i]) * per_unit)) / per_unit;
  }
  char id[32];
  std::snprintf(id, sizeof id, "seed%016llx", static_cast<unsigned long long>(seed));
  return PairedSample(NormalizedImage::clamped(std::move(signal)), NormalizedImage(std::move(truth)), dose,
                      dose * spec.dose_ratio, id);
}

std::vector<PairedSample> synth_dataset(int count, int size, std::uint64_t seed, const DegradeSpec& spec) {
  if (count < 0) throw InputError("synth_dataset: negative count");
  std::vector<PairedSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto p = synth_pair(mix_seed(seed, static_cast<std::uint64_t>(i) + 1000), size, spec);
    char id[16];
    std::snprintf(id, sizeof id, "syn%04d", i);
    p.id = id;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace lctem

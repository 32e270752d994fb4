#pragma once

// Deliberately naive reference implementations. Nothing here shares code
// with the library beyond the container types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lctem/micrograph.hpp"
#include "lctem/tensor.hpp"

namespace oracle {

using lctem::ImageArray;
using lctem::Shape;
using lctem::Tensor;

// out[n][oc][oh][ow] = b[oc] + sum over (ic, kh, kw) in lexicographic order
template <typename S>
Tensor<S> conv2d(const Tensor<S>& in, const Tensor<S>& w, const Tensor<S>* b, int stride, int pad) {
  const Shape& si = in.shape();
  const Shape& sw = w.shape();
  const int ho = (si.h + 2 * pad - sw.h) / stride + 1;
  const int wo = (si.w + 2 * pad - sw.w) / stride + 1;
  Tensor<S> out(Shape{si.n, sw.n, ho, wo});
  for (int n = 0; n < si.n; ++n)
    for (int oc = 0; oc < sw.n; ++oc)
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          S acc = b ? b->data()[oc] : S(0);
          for (int ic = 0; ic < si.c; ++ic)
            for (int kh = 0; kh < sw.h; ++kh)
              for (int kw = 0; kw < sw.w; ++kw) {
                const int y = oh * stride + kh - pad;
                const int x = ow * stride + kw - pad;
                const S v = (y >= 0 && y < si.h && x >= 0 && x < si.w) ? in.at(n, ic, y, x) : S(0);
                acc += w.at(oc, ic, kh, kw) * v;
              }
          out.at(n, oc, oh, ow) = acc;
        }
  return out;
}

struct WindowStats {
  double mx, my, vx, vy, cxy;
};

inline WindowStats window_stats(const ImageArray& x, const ImageArray& y, int r0, int c0, int w,
                                bool unbiased) {
  double sx = 0, sy = 0;
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j) {
      sx += x(r0 + i, c0 + j);
      sy += y(r0 + i, c0 + j);
    }
  const double n = double(w) * w;
  const double mx = sx / n, my = sy / n;
  double vx = 0, vy = 0, cxy = 0;
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j) {
      const double dx = x(r0 + i, c0 + j) - mx, dy = y(r0 + i, c0 + j) - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
  const double d = unbiased ? n - 1 : n;
  return {mx, my, vx / d, vy / d, cxy / d};
}

/// Per-window SSIM over every valid anchor, then the plain mean.
inline double ssim(const ImageArray& x, const ImageArray& y, int w, double c1, double c2,
                   bool unbiased = true, std::vector<double>* map = nullptr) {
  double total = 0;
  int count = 0;
  for (int r = 0; r + w <= x.rows(); ++r)
    for (int c = 0; c + w <= x.cols(); ++c) {
      const auto s = window_stats(x, y, r, c, w, unbiased);
      const double v = ((2 * s.mx * s.my + c1) * (2 * s.cxy + c2)) /
                       ((s.mx * s.mx + s.my * s.my + c1) * (s.vx + s.vy + c2));
      if (map) map->push_back(v);
      total += v;
      ++count;
    }
  return total / count;
}

/// Resampling by explicit pixel-footprint intersection.
inline ImageArray area_resize(const ImageArray& src, int ow, int oh) {
  ImageArray out(oh, ow);
  const double sy = double(src.rows()) / oh, sx = double(src.cols()) / ow;
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j) {
      const double y0 = i * sy, y1 = (i + 1) * sy, x0 = j * sx, x1 = (j + 1) * sx;
      double acc = 0, area = 0;
      for (int r = 0; r < src.rows(); ++r)
        for (int c = 0; c < src.cols(); ++c) {
          const double oy = std::max(0.0, std::min(y1, r + 1.0) - std::max(y0, double(r)));
          const double ox = std::max(0.0, std::min(x1, c + 1.0) - std::max(x0, double(c)));
          acc += oy * ox * src(r, c);
          area += oy * ox;
        }
      out(i, j) = acc / area;
    }
  return out;
}

/// Central differences of f around x for every element (or the listed ones).
template <typename S>
std::vector<double> central_diff(const std::function<double()>& f, S* x, std::int64_t n,
                                 double eps = 1e-5, const std::vector<std::int64_t>* which = nullptr) {
  std::vector<double> g;
  auto one = [&](std::int64_t i) {
    const S keep = x[i];
    x[i] = keep + eps;
    const double up = f();
    x[i] = keep - eps;
    const double down = f();
    x[i] = keep;
    g.push_back((up - down) / (2 * eps));
  };
  if (which) {
    for (auto i : *which) one(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) one(i);
  }
  return g;
}

/// max |a - b| scaled by the largest reference magnitude.
inline double rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max(scale, std::abs(numeric[i]));
  }
  return scale > 0 ? diff / scale : diff;
}

/// Scalar Adam written out step by step.
struct AdamTrace {
  double p, m = 0, v = 0;
  int t = 0;
  void step(double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    p -= lr * mh / (std::sqrt(vh) + eps);
  }
};

template <typename S>
void fill_uniform(Tensor<S>& t, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = S(d(rng));
}

inline ImageArray random_image(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0, 1);
  ImageArray a(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) a(i, j) = d(rng);
  return a;
}

}  // namespace oracle

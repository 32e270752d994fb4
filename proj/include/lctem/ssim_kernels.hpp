#pragma once

#include <Eigen/Core>

namespace lctem::detail {

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Sums over every w x w window at stride 1 (valid mode). Separable, each
/// window summed directly rather than by running differences.
template <typename Scalar>
Plane<Scalar> box_sum_valid(const Plane<Scalar>& in, int w) {
  const Eigen::Index rows = in.rows() - w + 1;
  const Eigen::Index cols = in.cols() - w + 1;
  Plane<Scalar> horiz = Plane<Scalar>::Zero(in.rows(), cols);
  for (int k = 0; k < w; ++k) horiz += in.middleCols(k, cols);
  Plane<Scalar> out = Plane<Scalar>::Zero(rows, cols);
  for (int k = 0; k < w; ++k) out += horiz.middleRows(k, rows);
  return out;
}

/// Adjoint of box_sum_valid: scatters each anchor value back over its window.
template <typename Scalar>
Plane<Scalar> box_sum_adjoint(const Plane<Scalar>& anchors, int w) {
  Plane<Scalar> padded = Plane<Scalar>::Zero(anchors.rows() + 2 * (w - 1), anchors.cols() + 2 * (w - 1));
  padded.block(w - 1, w - 1, anchors.rows(), anchors.cols()) = anchors;
  return box_sum_valid(padded, w);
}

template <typename Scalar>
struct SsimConstants {
  int window = 11;
  Scalar c1 = Scalar(1e-4);
  Scalar c2 = Scalar(9e-4);
  bool unbiased = true;

  Scalar count() const { return Scalar(window * window); }
  Scalar cov_scale() const { return unbiased ? Scalar(1) / (count() - 1) : Scalar(1) / count(); }
};

/// Window statistics and SSIM map over all anchors.
template <typename Scalar>
struct SsimMaps {
  Plane<Scalar> mu_x, mu_y, var_x, var_y, cov_xy, map;
};

template <typename Scalar>
SsimMaps<Scalar> ssim_maps(const Plane<Scalar>& x, const Plane<Scalar>& y,
                           const SsimConstants<Scalar>& k) {
  const int w = k.window;
  const Scalar n = k.count();
  const Scalar cs = k.cov_scale();
  SsimMaps<Scalar> m;
  const Plane<Scalar> sx = box_sum_valid<Scalar>(x, w);
  const Plane<Scalar> sy = box_sum_valid<Scalar>(y, w);
  m.mu_x = sx / n;
  m.mu_y = sy / n;
  m.var_x = (box_sum_valid<Scalar>(x * x, w) - sx * m.mu_x) * cs;
  m.var_y = (box_sum_valid<Scalar>(y * y, w) - sy * m.mu_y) * cs;
  m.cov_xy = (box_sum_valid<Scalar>(x * y, w) - sx * m.mu_y) * cs;
  m.map = ((Scalar(2) * m.mu_x * m.mu_y + k.c1) * (Scalar(2) * m.cov_xy + k.c2)) /
          ((m.mu_x.square() + m.mu_y.square() + k.c1) * (m.var_x + m.var_y + k.c2));
  return m;
}

/// Gradient of the mean of the SSIM map with respect to every pixel of x.
template <typename Scalar>
Plane<Scalar> ssim_mean_gradient(const Plane<Scalar>& x, const Plane<Scalar>& y,
                                 const SsimConstants<Scalar>& k, const SsimMaps<Scalar>& m) {
  const Scalar n = k.count();
  const Scalar cs = k.cov_scale();
  const Plane<Scalar> a1 = Scalar(2) * m.mu_x * m.mu_y + k.c1;
  const Plane<Scalar> a2 = Scalar(2) * m.cov_xy + k.c2;
  const Plane<Scalar> b1 = m.mu_x.square() + m.mu_y.square() + k.c1;
  const Plane<Scalar> b2 = m.var_x + m.var_y + k.c2;
  const Plane<Scalar>& s = m.map;

  const Plane<Scalar> d_mu = s * (Scalar(2) * m.mu_y / a1 - Scalar(2) * m.mu_x / b1);
  const Plane<Scalar> beta = Scalar(2) * cs * (-s / b2);
  const Plane<Scalar> gamma = cs * (Scalar(2) * s / a2);
  const Plane<Scalar> alpha = d_mu / n - beta * m.mu_x - gamma * m.mu_y;

  const int w = k.window;
  const Scalar inv_windows = Scalar(1) / static_cast<Scalar>(s.size());
  return (box_sum_adjoint<Scalar>(alpha, w) + x * box_sum_adjoint<Scalar>(beta, w) +
          y * box_sum_adjoint<Scalar>(gamma, w)) *
         inv_windows;
}

}  // namespace lctem::detail

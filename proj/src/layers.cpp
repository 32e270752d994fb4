#include "lctem/layers.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "lctem/parallel.hpp"
#include "lctem/summation.hpp"

namespace lctem {

namespace {

// Polyphase view of a padded input plane. A stride-s convolution reads
// phase (kh % s, kw % s) at offset (kh / s, kw / s), so every kernel tap is
// one contiguous axpy over an Ho x Wq output grid. Columns Wo..Wq-1 of the
// grid are scratch and never reach the output.
// Vector tiles may read up to this many elements past the last phase.
constexpr std::int64_t kSlack = 128;

struct ConvLayout {
  int s, k, pad, h, w, ho, wo, wq, hq;

  ConvLayout(int height, int width, int kernel, int stride, int padding)
      : s(stride), k(kernel), pad(padding), h(height), w(width) {
    ho = (h + 2 * pad - k) / s + 1;
    wo = (w + 2 * pad - k) / s + 1;
    if (h + 2 * pad < k || w + 2 * pad < k || ho < 1 || wo < 1)
      throw ShapeError("conv2d: kernel larger than padded input");
    wq = wo + (k - 1) / s;
    hq = ho + (k - 1) / s + 1;
  }

  std::int64_t grid() const { return std::int64_t{ho} * wq; }
  std::int64_t phase_size() const { return std::int64_t{hq} * wq; }
  std::int64_t phases_size() const { return phase_size() * s * s; }
  std::int64_t tap_offset(int kh, int kw) const { return std::int64_t{kh / s} * wq + kw / s; }
  int tap_phase(int kh, int kw) const { return (kh % s) * s + kw % s; }
};

template <typename Scalar>
void fill_phases(const Scalar* plane, const ConvLayout& L, Scalar* dst) {
  for (int py = 0; py < L.s; ++py) {
    for (int px = 0; px < L.s; ++px) {
      Scalar* ph = dst + (py * L.s + px) * L.phase_size();
      for (int i = 0; i < L.hq; ++i) {
        const int y = i * L.s + py - L.pad;
        Scalar* row = ph + std::int64_t{i} * L.wq;
        if (y < 0 || y >= L.h) {
          std::fill(row, row + L.wq, Scalar(0));
          continue;
        }
        const Scalar* src = plane + std::int64_t{y} * L.w;
        if (L.s == 1) {
          const int lead = std::min(L.pad, L.wq);
          std::fill(row, row + lead, Scalar(0));
          const int n = std::max(0, std::min(L.w, L.wq - lead));
          std::copy_n(src, n, row + lead);
          std::fill(row + lead + n, row + L.wq, Scalar(0));
          continue;
        }
        for (int j = 0; j < L.wq; ++j) {
          const int x = j * L.s + px - L.pad;
          row[j] = (x >= 0 && x < L.w) ? src[x] : Scalar(0);
        }
      }
    }
  }
}

template <typename Scalar>
std::vector<Scalar> all_phases(const Tensor<Scalar>& input, const ConvLayout& L) {
  const Shape& sh = input.shape();
  std::vector<Scalar> phases(static_cast<std::size_t>(std::int64_t{sh.n} * sh.c * L.phases_size() + kSlack),
                             Scalar(0));
  parallel_for(0, std::int64_t{sh.n} * sh.c, [&](std::int64_t i) {
    const int n = static_cast<int>(i / sh.c);
    const int c = static_cast<int>(i % sh.c);
    fill_phases(input.plane(n, c), L, phases.data() + i * L.phases_size());
  });
  return phases;
}

void check_conv_shapes(const Shape& in, const Shape& wt, int stride, int pad) {
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  if (wt.c != in.c)
    throw ShapeError("conv2d: weight expects " + std::to_string(wt.c) + " input channels, got " +
                     std::to_string(in.c));
  if (wt.h != wt.w) throw ShapeError("conv2d: only square kernels are supported");
}

}  // namespace

// Output tile of 4 channels x V grid points kept in registers across all
// (ic, kh, kw) taps. Accumulation order per pixel is bias, then taps in
// lexicographic order, same as the textbook loop.
template <typename Scalar, int V>
void conv_tile4(const Scalar* ph_n, std::int64_t ph_stride, const std::int64_t* taps, int ntaps,
                int in_c, const Scalar* wpack, const Scalar* b0, std::int64_t q0, Scalar* acc_out,
                std::int64_t G) {
  using Vec = Eigen::Array<Scalar, V, 1>;
  using In = Eigen::Map<const Vec>;
  Vec a0 = Vec::Constant(b0[0]), a1 = Vec::Constant(b0[1]), a2 = Vec::Constant(b0[2]),
      a3 = Vec::Constant(b0[3]);
  for (int ic = 0; ic < in_c; ++ic) {
    const Scalar* base = ph_n + ic * ph_stride + q0;
    const Scalar* w = wpack + std::int64_t{ic} * ntaps * 4;
    for (int t = 0; t < ntaps; ++t) {
      const In x(base + taps[t]);
      a0 += w[4 * t] * x;
      a1 += w[4 * t + 1] * x;
      a2 += w[4 * t + 2] * x;
      a3 += w[4 * t + 3] * x;
    }
  }
  Eigen::Map<Vec>(acc_out + q0) = a0;
  Eigen::Map<Vec>(acc_out + G + q0) = a1;
  Eigen::Map<Vec>(acc_out + 2 * G + q0) = a2;
  Eigen::Map<Vec>(acc_out + 3 * G + q0) = a3;
}

template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                              const Tensor<Scalar>* bias, int stride, int pad) {
  const Shape& in = input.shape();
  const Shape& wt = weight.shape();
  check_conv_shapes(in, wt, stride, pad);
  if (bias && bias->size() != wt.n) throw ShapeError("conv2d: bias size must equal out channels");
  const ConvLayout L(in.h, in.w, wt.h, stride, pad);
  const std::vector<Scalar> phases = all_phases(input, L);
  const int oc_count = wt.n;
  const int k = wt.h;
  const int ntaps = k * k;
  constexpr int kBlock = 4;
  constexpr int V = 128 / static_cast<int>(sizeof(Scalar));
  static_assert(V <= kSlack);
  const int blocks = (oc_count + kBlock - 1) / kBlock;
  std::vector<std::int64_t> taps(static_cast<std::size_t>(ntaps));
  for (int kh = 0; kh < k; ++kh)
    for (int kw = 0; kw < k; ++kw)
      taps[static_cast<std::size_t>(kh * k + kw)] = L.tap_phase(kh, kw) * L.phase_size() + L.tap_offset(kh, kw);
  // weights packed as [block][ic][tap][4], zero for missing channels
  std::vector<Scalar> wpack(static_cast<std::size_t>(blocks) * in.c * ntaps * kBlock, Scalar(0));
  std::vector<Scalar> bpack(static_cast<std::size_t>(blocks) * kBlock, Scalar(0));
  for (int oc = 0; oc < oc_count; ++oc) {
    const int blk = oc / kBlock, b = oc % kBlock;
    if (bias) bpack[static_cast<std::size_t>(oc)] = bias->data()[oc];
    for (int ic = 0; ic < in.c; ++ic)
      for (int t = 0; t < ntaps; ++t)
        wpack[((static_cast<std::size_t>(blk) * in.c + ic) * ntaps + t) * kBlock + b] =
            weight.data()[(std::int64_t{oc} * in.c + ic) * ntaps + t];
  }

  const std::int64_t G = L.grid();
  const std::int64_t chunks = (G + V - 1) / V;
  const std::int64_t Gpad = chunks * V;
  Tensor<Scalar> out(Shape{in.n, oc_count, L.ho, L.wo});
  // Jobs are (sample, channel block, slab of grid chunks) so that small
  // layers still spread over threads.
  const std::int64_t slabs = std::max<std::int64_t>(1, std::min<std::int64_t>(chunks, 8));
  const std::int64_t per_slab = (chunks + slabs - 1) / slabs;
  std::vector<Scalar> acc(static_cast<std::size_t>(std::int64_t{in.n} * blocks * kBlock * Gpad));
  parallel_for(0, std::int64_t{in.n} * blocks * slabs, [&](std::int64_t job) {
    const int n = static_cast<int>(job / (blocks * slabs));
    const int blk = static_cast<int>((job / slabs) % blocks);
    const std::int64_t slab = job % slabs;
    const Scalar* ph_n = phases.data() + std::int64_t{n} * in.c * L.phases_size();
    Scalar* acc_blk = acc.data() + (std::int64_t{n} * blocks + blk) * kBlock * Gpad;
    const Scalar* wp = wpack.data() + static_cast<std::size_t>(blk) * in.c * ntaps * kBlock;
    const std::int64_t c_end = std::min(chunks, (slab + 1) * per_slab);
    for (std::int64_t c = slab * per_slab; c < c_end; ++c)
      conv_tile4<Scalar, V>(ph_n, L.phases_size(), taps.data(), ntaps, in.c, wp,
                            bpack.data() + blk * kBlock, c * V, acc_blk, Gpad);
  });
  parallel_for(0, std::int64_t{in.n} * oc_count, [&](std::int64_t i) {
    const int n = static_cast<int>(i / oc_count), oc = static_cast<int>(i % oc_count);
    const Scalar* src = acc.data() + ((std::int64_t{n} * blocks + oc / kBlock) * kBlock + oc % kBlock) * Gpad;
    Scalar* dst = out.plane(n, oc);
    for (int oh = 0; oh < L.ho; ++oh)
      std::copy_n(src + std::int64_t{oh} * L.wq, L.wo, dst + std::int64_t{oh} * L.wo);
  });
  return out;
}

// Weight-gradient tile: 4 output channels x up to 3 taps, each a dot
// product over the output grid, with vector partial sums.
template <typename Scalar, int V, int NT>
void wgrad_tile(const Scalar* const* g, const Scalar* const* src, std::int64_t Gpad, Scalar out[4][3]) {
  using Vec = Eigen::Array<Scalar, V, 1>;
  using In = Eigen::Map<const Vec>;
  Vec acc[4][NT];
  for (auto& row : acc)
    for (auto& a : row) a.setZero();
  for (std::int64_t q = 0; q < Gpad; q += V) {
    const In g0(g[0] + q), g1(g[1] + q), g2(g[2] + q), g3(g[3] + q);
#pragma GCC unroll 3
    for (int t = 0; t < NT; ++t) {
      const In x(src[t] + q);
      acc[0][t] += g0 * x;
      acc[1][t] += g1 * x;
      acc[2][t] += g2 * x;
      acc[3][t] += g3 * x;
    }
  }
  for (int b = 0; b < 4; ++b)
    for (int t = 0; t < NT; ++t) out[b][t] += acc[b][t].sum();
}

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                                  const Tensor<Scalar>& grad_out, int stride, int pad,
                                  bool want_input_grad) {
  const Shape& in = input.shape();
  const Shape& wt = weight.shape();
  check_conv_shapes(in, wt, stride, pad);
  const ConvLayout L(in.h, in.w, wt.h, stride, pad);
  require_shape(grad_out, Shape{in.n, wt.n, L.ho, L.wo}, "conv2d_backward grad_out");
  const int oc_count = wt.n;
  const int k = wt.h;
  const int ntaps = k * k;
  constexpr int kBlock = 4;
  constexpr int V = 64 / static_cast<int>(sizeof(Scalar));
  const int blocks = (oc_count + kBlock - 1) / kBlock;
  const std::int64_t G = L.grid();
  const std::int64_t Gpad = (G + V - 1) / V * V;

  // Upstream gradient on the padded-width grid; scratch columns, the tail up
  // to Gpad and the channels of a partial last block are zero.
  const std::int64_t oc_padded = std::int64_t{blocks} * kBlock;
  std::vector<Scalar> grid(static_cast<std::size_t>(std::int64_t{in.n} * oc_padded * Gpad), Scalar(0));
  parallel_for(0, std::int64_t{in.n} * oc_count, [&](std::int64_t i) {
    const int n = static_cast<int>(i / oc_count), oc = static_cast<int>(i % oc_count);
    const Scalar* src = grad_out.plane(n, oc);
    Scalar* dst = grid.data() + (n * oc_padded + oc) * Gpad;
    for (int oh = 0; oh < L.ho; ++oh)
      std::copy_n(src + std::int64_t{oh} * L.wo, L.wo, dst + std::int64_t{oh} * L.wq);
  });
  const std::vector<Scalar> phases = all_phases(input, L);

  ConvGrads<Scalar> g;
  g.weight = Tensor<Scalar>(wt);
  g.bias = Tensor<Scalar>(Shape{1, oc_count, 1, 1});
  parallel_for(0, std::int64_t{blocks} * in.c, [&](std::int64_t job) {
    const int blk = static_cast<int>(job / in.c), ic = static_cast<int>(job % in.c);
    const int oc0 = blk * kBlock;
    const int nb = std::min(kBlock, oc_count - oc0);
    // Blocks of the grid stay in L1 while every tap chunk visits them.
    constexpr std::int64_t kQBlock = 1024;
    std::vector<std::array<std::array<Scalar, 3>, 4>> acc(static_cast<std::size_t>((ntaps + 2) / 3));
    for (auto& a : acc)
      for (auto& r : a) r.fill(Scalar(0));
    for (int n = 0; n < in.n; ++n) {
      const Scalar* plane = phases.data() + (std::int64_t{n} * in.c + ic) * L.phases_size();
      for (std::int64_t q0 = 0; q0 < Gpad; q0 += kQBlock) {
        const std::int64_t len = std::min(kQBlock, Gpad - q0);
        const Scalar* gq[4];
        for (int b = 0; b < kBlock; ++b) gq[b] = grid.data() + (n * oc_padded + oc0 + b) * Gpad + q0;
        for (int t0 = 0; t0 < ntaps; t0 += 3) {
          const int nt = std::min(3, ntaps - t0);
          const Scalar* src[3];
          for (int t = 0; t < nt; ++t) {
            const int kh = (t0 + t) / k, kw = (t0 + t) % k;
            src[t] = plane + L.tap_phase(kh, kw) * L.phase_size() + L.tap_offset(kh, kw) + q0;
          }
          Scalar part[4][3] = {};
          if (nt == 3) wgrad_tile<Scalar, V, 3>(gq, src, len, part);
          else if (nt == 2) wgrad_tile<Scalar, V, 2>(gq, src, len, part);
          else wgrad_tile<Scalar, V, 1>(gq, src, len, part);
          for (int b = 0; b < kBlock; ++b)
            for (int t = 0; t < nt; ++t) acc[static_cast<std::size_t>(t0 / 3)][b][t] += part[b][t];
        }
      }
    }
    for (int b = 0; b < nb; ++b)
      for (int t = 0; t < ntaps; ++t)
        g.weight.data()[(std::int64_t{oc0 + b} * in.c + ic) * ntaps + t] =
            acc[static_cast<std::size_t>(t / 3)][b][t % 3];
  });
  for (int oc = 0; oc < oc_count; ++oc) {
    Scalar bsum(0);
    for (int n = 0; n < in.n; ++n)
      bsum += pairwise_sum(std::span<const Scalar>(grid.data() + (n * oc_padded + oc) * Gpad, static_cast<std::size_t>(G)));
    g.bias.data()[oc] = bsum;
  }

  if (!want_input_grad) return g;
  // Input gradient is a stride-1 convolution of the zero-dilated upstream
  // gradient with the flipped, channel-transposed kernel.
  const int hd = in.h + k - 1, wd = in.w + k - 1;
  Tensor<Scalar> dilated(Shape{in.n, oc_count, hd, wd});
  const int off = k - 1 - pad;
  parallel_for(0, std::int64_t{in.n} * oc_count, [&](std::int64_t i) {
    const Scalar* src = grad_out.plane(static_cast<int>(i / oc_count), static_cast<int>(i % oc_count));
    Scalar* dst = dilated.plane(static_cast<int>(i / oc_count), static_cast<int>(i % oc_count));
    for (int oh = 0; oh < L.ho; ++oh) {
      const int y = oh * stride + off;
      if (y < 0 || y >= hd) continue;
      for (int ow = 0; ow < L.wo; ++ow) {
        const int x = ow * stride + off;
        if (x >= 0 && x < wd) dst[std::int64_t{y} * wd + x] = src[std::int64_t{oh} * L.wo + ow];
      }
    }
  });
  Tensor<Scalar> flipped(Shape{in.c, oc_count, k, k});
  for (int oc = 0; oc < oc_count; ++oc)
    for (int ic = 0; ic < in.c; ++ic)
      for (int t = 0; t < ntaps; ++t)
        flipped.data()[(std::int64_t{ic} * oc_count + oc) * ntaps + (ntaps - 1 - t)] =
            weight.data()[(std::int64_t{oc} * in.c + ic) * ntaps + t];
  g.input = conv2d_forward(dilated, flipped, static_cast<const Tensor<Scalar>*>(nullptr), 1, 0);
  return g;
}

template <typename Scalar>
Tensor<Scalar> relu_forward(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.shape());
  y.values() = x.values().max(Scalar(0));
  return y;
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& output, const Tensor<Scalar>& grad_out) {
  require_shape(grad_out, output.shape(), "relu_backward");
  Tensor<Scalar> g(output.shape());
  g.values() = (output.values() > Scalar(0)).select(grad_out.values(), Scalar(0));
  return g;
}

template <typename Scalar>
Tensor<Scalar> sigmoid_forward(const Tensor<Scalar>& x) {
  constexpr Scalar lo = std::numeric_limits<Scalar>::min();
  const Scalar hi = Scalar(1) - std::numeric_limits<Scalar>::epsilon() / 2;
  Tensor<Scalar> y(x.shape());
  y.values() = (Scalar(1) / (Scalar(1) + (-x.values()).exp())).max(lo).min(hi);
  return y;
}

template <typename Scalar>
Tensor<Scalar> sigmoid_backward(const Tensor<Scalar>& output, const Tensor<Scalar>& grad_out) {
  require_shape(grad_out, output.shape(), "sigmoid_backward");
  Tensor<Scalar> g(output.shape());
  g.values() = grad_out.values() * output.values() * (Scalar(1) - output.values());
  return g;
}

template <typename Scalar>
Tensor<Scalar> upsample_nearest2x_forward(const Tensor<Scalar>& x) {
  const Shape& s = x.shape();
  Tensor<Scalar> y(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
  parallel_for(0, std::int64_t{s.n} * s.c, [&](std::int64_t i) {
    const int n = static_cast<int>(i / s.c), c = static_cast<int>(i % s.c);
    const Scalar* src = x.plane(n, c);
    Scalar* dst = y.plane(n, c);
    for (int r = 0; r < 2 * s.h; ++r) {
      const Scalar* srow = src + std::int64_t{r / 2} * s.w;
      Scalar* drow = dst + std::int64_t{r} * 2 * s.w;
      for (int q = 0; q < 2 * s.w; ++q) drow[q] = srow[q / 2];
    }
  });
  return y;
}

template <typename Scalar>
Tensor<Scalar> upsample_nearest2x_backward(const Tensor<Scalar>& grad_out) {
  const Shape& s = grad_out.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("upsample backward: odd gradient size");
  Tensor<Scalar> g(Shape{s.n, s.c, s.h / 2, s.w / 2});
  parallel_for(0, std::int64_t{s.n} * s.c, [&](std::int64_t i) {
    const int n = static_cast<int>(i / s.c), c = static_cast<int>(i % s.c);
    const Scalar* src = grad_out.plane(n, c);
    Scalar* dst = g.plane(n, c);
    for (int r = 0; r < s.h / 2; ++r) {
      const Scalar* a = src + std::int64_t{2 * r} * s.w;
      const Scalar* b = a + s.w;
      for (int q = 0; q < s.w / 2; ++q)
        dst[std::int64_t{r} * (s.w / 2) + q] = (a[2 * q] + a[2 * q + 1]) + (b[2 * q] + b[2 * q + 1]);
    }
  });
  return g;
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
    throw ShapeError("concat_channels: " + sa.str() + " vs " + sb.str());
  Tensor<Scalar> y(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.plane(n, 0), sa.c * sa.plane(), y.plane(n, 0));
    std::copy_n(b.plane(n, 0), sb.c * sb.plane(), y.plane(n, sa.c));
  }
  return y;
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> split_channels(const Tensor<Scalar>& g, int first) {
  const Shape& s = g.shape();
  if (first < 0 || first > s.c) throw ShapeError("split_channels: bad split");
  Tensor<Scalar> a(Shape{s.n, first, s.h, s.w});
  Tensor<Scalar> b(Shape{s.n, s.c - first, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(g.plane(n, 0), first * s.plane(), a.plane(n, 0));
    std::copy_n(g.plane(n, first), (s.c - first) * s.plane(), b.plane(n, 0));
  }
  return {std::move(a), std::move(b)};
}

template <typename Scalar>
Tensor<Scalar> batchnorm_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                                 const Tensor<Scalar>& beta, Tensor<Scalar>& running_mean,
                                 Tensor<Scalar>& running_var, NormMode mode, double eps,
                                 double momentum, BatchNormCache<Scalar>* cache) {
  const Shape& s = x.shape();
  if (gamma.size() != s.c || beta.size() != s.c || running_mean.size() != s.c ||
      running_var.size() != s.c)
    throw ShapeError("batchnorm: per-channel parameters do not match " + std::to_string(s.c) +
                     " channels");
  using ConstMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using Map = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  const std::int64_t P = s.plane();
  const std::int64_t M = std::int64_t{s.n} * P;
  Tensor<Scalar> y(s);
  if (cache) {
    cache->normalized = Tensor<Scalar>(s);
    cache->inv_std.resize(s.c);
  }
  parallel_for(0, s.c, [&](std::int64_t ci) {
    const int c = static_cast<int>(ci);
    Scalar mean, inv_std;
    if (mode == NormMode::Train) {
      Scalar sum(0);
      for (int n = 0; n < s.n; ++n) sum += ConstMap(x.plane(n, c), P).sum();
      mean = sum / static_cast<Scalar>(M);
      Scalar sq(0);
      for (int n = 0; n < s.n; ++n) sq += (ConstMap(x.plane(n, c), P) - mean).square().sum();
      const Scalar var = sq / static_cast<Scalar>(M);
      inv_std = Scalar(1) / std::sqrt(var + static_cast<Scalar>(eps));
      const Scalar unbiased = M > 1 ? sq / static_cast<Scalar>(M - 1) : var;
      const auto mom = static_cast<Scalar>(momentum);
      running_mean.data()[c] = (Scalar(1) - mom) * running_mean.data()[c] + mom * mean;
      running_var.data()[c] = (Scalar(1) - mom) * running_var.data()[c] + mom * unbiased;
    } else {
      mean = running_mean.data()[c];
      inv_std = Scalar(1) / std::sqrt(running_var.data()[c] + static_cast<Scalar>(eps));
    }
    const Scalar gm = gamma.data()[c];
    const Scalar bt = beta.data()[c];
    for (int n = 0; n < s.n; ++n) {
      const auto xhat = (ConstMap(x.plane(n, c), P) - mean) * inv_std;
      if (cache) Map(cache->normalized.plane(n, c), P) = xhat;
      Map(y.plane(n, c), P) = xhat * gm + bt;
    }
    if (cache) cache->inv_std[c] = inv_std;
  });
  return y;
}

template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& gamma,
                                          const BatchNormCache<Scalar>& cache, NormMode mode) {
  const Shape& s = grad_out.shape();
  require_shape(cache.normalized, s, "batchnorm_backward cache");
  using ConstMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using Map = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  const std::int64_t P = s.plane();
  const auto M = static_cast<Scalar>(std::int64_t{s.n} * P);
  BatchNormGrads<Scalar> g{Tensor<Scalar>(s), Tensor<Scalar>(Shape{1, s.c, 1, 1}),
                           Tensor<Scalar>(Shape{1, s.c, 1, 1})};
  parallel_for(0, s.c, [&](std::int64_t ci) {
    const int c = static_cast<int>(ci);
    Scalar dbeta(0), dgamma(0);
    for (int n = 0; n < s.n; ++n) {
      const ConstMap go(grad_out.plane(n, c), P);
      dbeta += go.sum();
      dgamma += (go * ConstMap(cache.normalized.plane(n, c), P)).sum();
    }
    g.beta.data()[c] = dbeta;
    g.gamma.data()[c] = dgamma;
    const Scalar scale = gamma.data()[c] * cache.inv_std[c];
    for (int n = 0; n < s.n; ++n) {
      const ConstMap go(grad_out.plane(n, c), P);
      if (mode == NormMode::Train) {
        Map(g.input.plane(n, c), P) =
            (scale / M) * (M * go - dbeta - ConstMap(cache.normalized.plane(n, c), P) * dgamma);
      } else {
        Map(g.input.plane(n, c), P) = scale * go;
      }
    }
  });
  return g;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Conv2d<Scalar>::Conv2d(ParamStore<Scalar>& store, const std::string& name, int in_c, int out_c,
                       int kernel, int stride, int pad, bool with_bias)
    : in_c_(in_c), out_c_(out_c), k_(kernel), stride_(stride), pad_(pad) {
  weight_ = &store.add(name + ".weight", Shape{out_c, in_c, kernel, kernel});
  if (with_bias) bias_ = &store.add(name + ".bias", Shape{1, out_c, 1, 1});
}

template <typename Scalar>
Tensor<Scalar> Conv2d<Scalar>::forward(const Tensor<Scalar>& x, bool keep_for_backward) {
  if (keep_for_backward) input_ = x;
  return conv2d_forward(x, weight_->value, bias_ ? &bias_->value : nullptr, stride_, pad_);
}

template <typename Scalar>
Tensor<Scalar> Conv2d<Scalar>::backward(const Tensor<Scalar>& grad_out, bool want_input_grad) {
  auto g = conv2d_backward(input_, weight_->value, grad_out, stride_, pad_, want_input_grad);
  weight_->grad.values() += g.weight.values();
  if (bias_) bias_->grad.values() += g.bias.values();
  return std::move(g.input);
}

template <typename Scalar>
BatchNorm2d<Scalar>::BatchNorm2d(ParamStore<Scalar>& store, const std::string& name, int channels) {
  gamma_ = &store.add(name + ".gamma", Shape{1, channels, 1, 1});
  gamma_->value.values().setOnes();
  beta_ = &store.add(name + ".beta", Shape{1, channels, 1, 1});
  running_mean_ = &store.add_buffer(name + ".running_mean", Shape{1, channels, 1, 1}, Scalar(0));
  running_var_ = &store.add_buffer(name + ".running_var", Shape{1, channels, 1, 1}, Scalar(1));
}

template <typename Scalar>
Tensor<Scalar> BatchNorm2d<Scalar>::forward(const Tensor<Scalar>& x, NormMode mode,
                                            bool keep_for_backward) {
  mode_ = mode;
  return batchnorm_forward(x, gamma_->value, beta_->value, *running_mean_, *running_var_, mode,
                           kEps, kMomentum, keep_for_backward ? &cache_ : nullptr);
}

template <typename Scalar>
Tensor<Scalar> BatchNorm2d<Scalar>::backward(const Tensor<Scalar>& grad_out) {
  auto g = batchnorm_backward(grad_out, gamma_->value, cache_, mode_);
  gamma_->grad.values() += g.gamma.values();
  beta_->grad.values() += g.beta.values();
  return std::move(g.input);
}

#define LCTEM_INSTANTIATE_LAYERS(S)                                                              \
  template Tensor<S> conv2d_forward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>*, int,   \
                                    int);                                                        \
  template ConvGrads<S> conv2d_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,    \
                                        int, int, bool);                                         \
  template Tensor<S> relu_forward(const Tensor<S>&);                                             \
  template Tensor<S> relu_backward(const Tensor<S>&, const Tensor<S>&);                          \
  template Tensor<S> sigmoid_forward(const Tensor<S>&);                                          \
  template Tensor<S> sigmoid_backward(const Tensor<S>&, const Tensor<S>&);                       \
  template Tensor<S> upsample_nearest2x_forward(const Tensor<S>&);                               \
  template Tensor<S> upsample_nearest2x_backward(const Tensor<S>&);                              \
  template Tensor<S> concat_channels(const Tensor<S>&, const Tensor<S>&);                        \
  template std::pair<Tensor<S>, Tensor<S>> split_channels(const Tensor<S>&, int);                \
  template Tensor<S> batchnorm_forward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,     \
                                       Tensor<S>&, Tensor<S>&, NormMode, double, double,         \
                                       BatchNormCache<S>*);                                      \
  template BatchNormGrads<S> batchnorm_backward(const Tensor<S>&, const Tensor<S>&,              \
                                                const BatchNormCache<S>&, NormMode);             \
  template class Conv2d<S>;                                                                      \
  template class BatchNorm2d<S>;

LCTEM_INSTANTIATE_LAYERS(float)
LCTEM_INSTANTIATE_LAYERS(double)

}  // namespace lctem

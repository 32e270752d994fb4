#include "lctem/losses.hpp"

#include <span>

#include "lctem/error.hpp"
#include "lctem/parallel.hpp"
#include "lctem/ssim_kernels.hpp"
#include "lctem/summation.hpp"

namespace lctem {

LossKind parse_loss_kind(std::string_view name) {
  if (name == "ssim") return LossKind::Ssim;
  if (name == "l1") return LossKind::L1;
  if (name == "l2") return LossKind::L2;
  throw InputError("unknown loss '" + std::string(name) + "' (expected ssim, l1 or l2)");
}

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Ssim: return "ssim";
    case LossKind::L1: return "l1";
    case LossKind::L2: return "l2";
  }
  return "?";
}

namespace {

template <typename Scalar>
using Plane = detail::Plane<Scalar>;

template <typename Scalar>
Eigen::Map<const Plane<Scalar>> plane_of(const Tensor<Scalar>& t, int n) {
  return {t.plane(n, 0), t.shape().h, t.shape().w};
}

template <typename Scalar>
void check_pair(const Tensor<Scalar>& p, const Tensor<Scalar>& t) {
  if (p.shape() != t.shape())
    throw ShapeError("loss: prediction " + p.shape().str() + " vs target " + t.shape().str());
  if (p.shape().c != 1) throw ShapeError("loss: expected single-channel images");
}

template <typename Scalar>
detail::SsimConstants<Scalar> ssim_constants(const SsimConfig& cfg, const Shape& s) {
  cfg.validate(s.w, s.h);
  return {cfg.window_size, static_cast<Scalar>(cfg.c1()), static_cast<Scalar>(cfg.c2()),
          cfg.normalization == VarianceNormalization::Unbiased};
}

template <typename Scalar>
Scalar mean_map(const Plane<Scalar>& m) {
  return pairwise_mean(std::span<const Scalar>(m.data(), static_cast<std::size_t>(m.size())));
}

template <typename Scalar>
LossResult<Scalar> compute(LossKind kind, const Tensor<Scalar>& p, const Tensor<Scalar>& t,
                           const SsimConfig& cfg, bool want_grad) {
  check_pair(p, t);
  const Shape& s = p.shape();
  LossResult<Scalar> r;
  if (want_grad) r.grad = Tensor<Scalar>(s);
  if (kind == LossKind::Ssim) {
    const auto k = ssim_constants<Scalar>(cfg, s);
    std::vector<Scalar> per_sample(static_cast<std::size_t>(s.n));
    parallel_for(0, s.n, [&](std::int64_t n) {
      const Plane<Scalar> x = plane_of(p, static_cast<int>(n));
      const Plane<Scalar> y = plane_of(t, static_cast<int>(n));
      const auto maps = detail::ssim_maps<Scalar>(x, y, k);
      per_sample[static_cast<std::size_t>(n)] = Scalar(1) - mean_map<Scalar>(maps.map);
      if (want_grad) {
        Eigen::Map<Plane<Scalar>>(r.grad.plane(static_cast<int>(n), 0), s.h, s.w) =
            detail::ssim_mean_gradient<Scalar>(x, y, k, maps) * (Scalar(-1) / static_cast<Scalar>(s.n));
      }
    });
    Scalar total(0);
    for (Scalar v : per_sample) total += v;
    r.value = total / static_cast<Scalar>(s.n);
    return r;
  }
  const auto diff = (p.values() - t.values()).eval();
  const auto count = static_cast<Scalar>(diff.size());
  if (kind == LossKind::L1) {
    const auto a = diff.abs().eval();
    r.value = pairwise_mean(std::span<const Scalar>(a.data(), static_cast<std::size_t>(a.size())));
    if (want_grad) r.grad.values() = diff.sign() / count;
  } else {
    const auto a = diff.square().eval();
    r.value = pairwise_mean(std::span<const Scalar>(a.data(), static_cast<std::size_t>(a.size())));
    if (want_grad) r.grad.values() = Scalar(2) * diff / count;
  }
  return r;
}

}  // namespace

template <typename Scalar>
LossResult<Scalar> loss_and_grad(LossKind kind, const Tensor<Scalar>& prediction,
                                 const Tensor<Scalar>& target, const SsimConfig& cfg) {
  return compute(kind, prediction, target, cfg, true);
}

template <typename Scalar>
Scalar loss_value(LossKind kind, const Tensor<Scalar>& prediction, const Tensor<Scalar>& target,
                  const SsimConfig& cfg) {
  return compute(kind, prediction, target, cfg, false).value;
}

template <typename Scalar>
Tensor<Scalar> ssim_loss_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& y,
                                  const SsimConfig& cfg) {
  return compute(LossKind::Ssim, x, y, cfg, true).grad;
}

template LossResult<float> loss_and_grad(LossKind, const Tensor<float>&, const Tensor<float>&, const SsimConfig&);
template LossResult<double> loss_and_grad(LossKind, const Tensor<double>&, const Tensor<double>&, const SsimConfig&);
template float loss_value(LossKind, const Tensor<float>&, const Tensor<float>&, const SsimConfig&);
template double loss_value(LossKind, const Tensor<double>&, const Tensor<double>&, const SsimConfig&);
template Tensor<float> ssim_loss_backward(const Tensor<float>&, const Tensor<float>&, const SsimConfig&);
template Tensor<double> ssim_loss_backward(const Tensor<double>&, const Tensor<double>&, const SsimConfig&);

}  // namespace lctem

#pragma once

#include <string_view>

#include "lctem/metrics.hpp"
#include "lctem/tensor.hpp"

namespace lctem {

enum class LossKind { Ssim, L1, L2 };

LossKind parse_loss_kind(std::string_view name);
std::string_view to_string(LossKind kind);

template <typename Scalar>
struct LossResult {
  Scalar value = Scalar(0);
  Tensor<Scalar> grad;  ///< d value / d prediction
};

/// Batch loss between single-channel predictions and targets of shape
/// (B, 1, H, W). SSIM loss is the batch mean of per-image (1 - mean SSIM);
/// L1/L2 are means over every element.
template <typename Scalar>
LossResult<Scalar> loss_and_grad(LossKind kind, const Tensor<Scalar>& prediction,
                                 const Tensor<Scalar>& target, const SsimConfig& cfg);

/// Value only (no gradient buffer allocated).
template <typename Scalar>
Scalar loss_value(LossKind kind, const Tensor<Scalar>& prediction, const Tensor<Scalar>& target,
                  const SsimConfig& cfg);

/// Gradient of the SSIM loss with respect to x.
template <typename Scalar>
Tensor<Scalar> ssim_loss_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& y,
                                  const SsimConfig& cfg);

extern template LossResult<float> loss_and_grad(LossKind, const Tensor<float>&, const Tensor<float>&, const SsimConfig&);
extern template LossResult<double> loss_and_grad(LossKind, const Tensor<double>&, const Tensor<double>&, const SsimConfig&);
extern template float loss_value(LossKind, const Tensor<float>&, const Tensor<float>&, const SsimConfig&);
extern template double loss_value(LossKind, const Tensor<double>&, const Tensor<double>&, const SsimConfig&);
extern template Tensor<float> ssim_loss_backward(const Tensor<float>&, const Tensor<float>&, const SsimConfig&);
extern template Tensor<double> ssim_loss_backward(const Tensor<double>&, const Tensor<double>&, const SsimConfig&);

}  // namespace lctem

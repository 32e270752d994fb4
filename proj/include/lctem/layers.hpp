#pragma once

#include <string>

#include "lctem/params.hpp"
#include "lctem/tensor.hpp"

namespace lctem {

// ---------------------------------------------------------------------------
// Stateless kernels

/// Cross-correlation with zero padding. weight is (out_c, in_c, k, k); bias
/// may be null. Output size is floor((H + 2 pad - k) / stride) + 1.
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                              const Tensor<Scalar>* bias, int stride, int pad);

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input;   ///< empty when not requested
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;    ///< (1, out_c, 1, 1)
};

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                                  const Tensor<Scalar>& grad_out, int stride, int pad,
                                  bool want_input_grad = true);

template <typename Scalar>
Tensor<Scalar> relu_forward(const Tensor<Scalar>& x);
/// Gradient through relu given its forward output.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& output, const Tensor<Scalar>& grad_out);

/// 1 / (1 + exp(-x)), held strictly inside (0, 1) even where the result
/// would round to an endpoint.
template <typename Scalar>
Tensor<Scalar> sigmoid_forward(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> sigmoid_backward(const Tensor<Scalar>& output, const Tensor<Scalar>& grad_out);

template <typename Scalar>
Tensor<Scalar> upsample_nearest2x_forward(const Tensor<Scalar>& x);
/// Sums each 2x2 block of the upstream gradient.
template <typename Scalar>
Tensor<Scalar> upsample_nearest2x_backward(const Tensor<Scalar>& grad_out);

/// Channel concatenation [a, b].
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
/// Splits a gradient of concat_channels back into its two parts.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> split_channels(const Tensor<Scalar>& g, int first_channels);

enum class NormMode { Train, Eval };

template <typename Scalar>
struct BatchNormCache {
  Tensor<Scalar> normalized;  ///< x_hat
  Eigen::Array<Scalar, Eigen::Dynamic, 1> inv_std;
};

/// Per-channel batch normalization. Train mode uses batch statistics (biased
/// variance) and updates the running estimates with `momentum` (unbiased
/// variance); eval mode uses the running estimates.
template <typename Scalar>
Tensor<Scalar> batchnorm_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                                 const Tensor<Scalar>& beta, Tensor<Scalar>& running_mean,
                                 Tensor<Scalar>& running_var, NormMode mode, double eps,
                                 double momentum, BatchNormCache<Scalar>* cache);

template <typename Scalar>
struct BatchNormGrads {
  Tensor<Scalar> input, gamma, beta;
};

/// Exact train-mode gradient; eval mode is the affine map with frozen stats.
template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& gamma,
                                          const BatchNormCache<Scalar>& cache, NormMode mode);

// ---------------------------------------------------------------------------
// Layers with learnable state. Each caches what its backward needs; backward
// accumulates into the parameter gradients held by the ParamStore.

template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<Scalar>& store, const std::string& name, int in_c, int out_c, int kernel,
         int stride, int pad, bool with_bias);

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool keep_for_backward);
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out, bool want_input_grad = true);

  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  Parameter<Scalar>& weight() { return *weight_; }

 private:
  Parameter<Scalar>* weight_ = nullptr;
  Parameter<Scalar>* bias_ = nullptr;
  int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  Tensor<Scalar> input_;
};

template <typename Scalar>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParamStore<Scalar>& store, const std::string& name, int channels);

  Tensor<Scalar> forward(const Tensor<Scalar>& x, NormMode mode, bool keep_for_backward);
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out);

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  Parameter<Scalar>* gamma_ = nullptr;
  Parameter<Scalar>* beta_ = nullptr;
  Tensor<Scalar>* running_mean_ = nullptr;
  Tensor<Scalar>* running_var_ = nullptr;
  BatchNormCache<Scalar> cache_;
  NormMode mode_ = NormMode::Train;
};

#define LCTEM_EXTERN_LAYERS(S)                                                                 \
  extern template Tensor<S> conv2d_forward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>*, \
                                           int, int);                                            \
  extern template ConvGrads<S> conv2d_backward(const Tensor<S>&, const Tensor<S>&,               \
                                               const Tensor<S>&, int, int, bool);                \
  extern template Tensor<S> relu_forward(const Tensor<S>&);                                      \
  extern template Tensor<S> relu_backward(const Tensor<S>&, const Tensor<S>&);                   \
  extern template Tensor<S> sigmoid_forward(const Tensor<S>&);                                   \
  extern template Tensor<S> sigmoid_backward(const Tensor<S>&, const Tensor<S>&);                \
  extern template Tensor<S> upsample_nearest2x_forward(const Tensor<S>&);                        \
  extern template Tensor<S> upsample_nearest2x_backward(const Tensor<S>&);                       \
  extern template Tensor<S> concat_channels(const Tensor<S>&, const Tensor<S>&);                 \
  extern template std::pair<Tensor<S>, Tensor<S>> split_channels(const Tensor<S>&, int);         \
  extern template Tensor<S> batchnorm_forward(const Tensor<S>&, const Tensor<S>&,                \
                                              const Tensor<S>&, Tensor<S>&, Tensor<S>&, NormMode, \
                                              double, double, BatchNormCache<S>*);               \
  extern template BatchNormGrads<S> batchnorm_backward(const Tensor<S>&, const Tensor<S>&,       \
                                                       const BatchNormCache<S>&, NormMode);      \
  extern template class Conv2d<S>;                                                               \
  extern template class BatchNorm2d<S>;

LCTEM_EXTERN_LAYERS(float)
LCTEM_EXTERN_LAYERS(double)
#undef LCTEM_EXTERN_LAYERS

}  // namespace lctem

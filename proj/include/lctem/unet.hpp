#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lctem/layers.hpp"

namespace lctem {

enum class StemKind {
  Conv3,  ///< 3x3 stride-1 stem, total downsampling 2^stages
  Conv7,  ///< 7x7 stride-2 stem, total downsampling 2^(stages+1)
};

enum class NormKind { Batch, None };

/// Encoder-decoder topology: residual basic-block encoder, one decoder stage
/// per encoder stage with channel-concatenation skips, sigmoid head.
struct ModelConfig {
  std::vector<int> encoder_blocks{2, 2, 2, 2};
  int base_width = 16;
  int input_channels = 1;
  int output_channels = 1;
  int input_size = 512;
  StemKind stem = StemKind::Conv3;
  NormKind norm = NormKind::Batch;

  int stages() const { return static_cast<int>(encoder_blocks.size()); }
  int downsampling_factor() const;
  void validate() const;

  /// key=value text form used inside checkpoints.
  std::string to_record() const;
  static ModelConfig from_record(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename Scalar>
class UNet {
 public:
  /// Deterministic He-uniform initialization from `seed`.
  UNet(const ModelConfig& config, std::uint64_t seed);
  ~UNet();
  UNet(UNet&&) noexcept;
  UNet& operator=(UNet&&) noexcept;
  UNet(const UNet&) = delete;
  UNet& operator=(const UNet&) = delete;

  /// (B, in_c, H, W) -> (B, out_c, H, W) with values strictly in (0, 1).
  /// H and W must be multiples of the downsampling factor. With
  /// keep_for_backward the activations needed by backward are retained.
  Tensor<Scalar> forward(const Tensor<Scalar>& batch, NormMode mode, bool keep_for_backward = false);

  /// Pre-sigmoid output of the most recent forward.
  const Tensor<Scalar>& logits() const { return logits_; }

  /// Accumulates parameter gradients given d loss / d output of the most
  /// recent forward(…, keep_for_backward = true).
  void backward(const Tensor<Scalar>& grad_output);

  ParamStore<Scalar>& store() { return *store_; }
  const ParamStore<Scalar>& store() const { return *store_; }
  const ModelConfig& config() const { return config_; }

  int encoder_stages() const;
  int decoder_stages() const;
  int skip_junctions() const;

  /// Same topology in another precision with converted parameters and buffers.
  template <typename Other>
  UNet<Other> converted() const {
    UNet<Other> out(config_, 0);
    for (const auto& [name, p] : store_->params())
      out.store().param(name).value = p.value.template cast<Other>();
    for (const auto& [name, b] : store_->buffers())
      out.store().buffers().at(name) = b.template cast<Other>();
    return out;
  }

 private:
  struct Impl;
  ModelConfig config_;
  std::unique_ptr<ParamStore<Scalar>> store_;
  std::unique_ptr<Impl> impl_;
  Tensor<Scalar> logits_;
  Tensor<Scalar> output_;
};

extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace lctem

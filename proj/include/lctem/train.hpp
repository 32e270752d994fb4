#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lctem/losses.hpp"
#include "lctem/metrics.hpp"
#include "lctem/micrograph.hpp"
#include "lctem/params.hpp"
#include "lctem/unet.hpp"

namespace lctem {

struct TrainConfig {
  LossKind loss = LossKind::Ssim;
  double learning_rate = 1e-4;
  int epochs = 2000;
  int batch_size = 4;
  double split_fraction = 0.9;
  std::uint64_t seed = 0;
  bool flips = true;
  double mosaic_probability = 0.25;
  SsimConfig ssim;  ///< window for the SSIM loss and for reported SSIM

  void validate() const;
};

struct DatasetSplit {
  std::vector<PairedSample> train;
  std::vector<PairedSample> validation;
};

/// Seeded shuffle, then the first floor(n * fraction) pairs train. Both sides
/// end up non-empty when n >= 2.
DatasetSplit split_dataset(std::vector<PairedSample> pairs, double fraction, std::uint64_t seed);

class Rng;

struct AugmentedPair {
  NormalizedImage noisy;
  NormalizedImage truth;
};

/// Optional four-pair mosaic (other tiles drawn from `set`), then independent
/// horizontal and vertical flips, each applied identically to both images.
AugmentedPair augment(const std::vector<PairedSample>& set, std::size_t index, const TrainConfig& cfg, Rng& rng);

/// Stacks single-channel images into a (B, 1, H, W) tensor.
template <typename Scalar>
Tensor<Scalar> stack_images(const std::vector<const NormalizedImage*>& images);

/// One pass over the training set in a seeded order (the epoch index picks the
/// stream). Returns the sample-weighted mean training loss. A non-finite loss
/// throws NonFiniteError naming the epoch, batch and pair ids.
double train_epoch(UNet<float>& model, const std::vector<PairedSample>& train, const TrainConfig& cfg, int epoch);

/// Sample-weighted mean loss with the model in evaluation mode.
double evaluate_loss(UNet<float>& model, const std::vector<PairedSample>& pairs, const TrainConfig& cfg);

/// Model prediction for every pair's noisy image, in evaluation mode.
std::vector<NormalizedImage> predict(UNet<float>& model, const std::vector<PairedSample>& pairs, int batch_size = 4);

/// Single image through the model in evaluation mode.
NormalizedImage predict_one(UNet<float>& model, const NormalizedImage& input);

struct PairScores {
  std::string id;
  Psnr psnr = Psnr::unbounded();
  double ssim = 0.0;
  Psnr baseline_psnr = Psnr::unbounded();
  double baseline_ssim = 0.0;
};

struct EvalReport {
  std::string loss;
  std::string encoder;
  std::vector<PairScores> pairs;
  Psnr mean_psnr = Psnr::unbounded();
  double mean_ssim = 0.0;
  Psnr baseline_psnr = Psnr::unbounded();
  double baseline_ssim = 0.0;

  /// `loss,encoder,psnr,ssim` plus an `original` baseline row.
  std::string to_csv() const;
};

/// Scores predictions (P) and noisy inputs (S) against truth (T).
EvalReport evaluate_predictions(const std::vector<NormalizedImage>& predictions,
                                const std::vector<PairedSample>& pairs, const SsimConfig& ssim = {});

EvalReport evaluate(UNet<float>& model, const std::vector<PairedSample>& pairs, const TrainConfig& cfg);

/// "resnet18" / "resnet34" for the standard block layouts, otherwise "resnet-a-b-..".
std::string encoder_name(const ModelConfig& config);

struct CurvePoint {
  int epoch = 0;  ///< 1-based count of completed epochs
  double train_loss = 0.0;
  double val_loss = 0.0;
  Psnr val_psnr = Psnr::unbounded();
  double val_ssim = 0.0;
};

/// Trains cfg.epochs epochs and records a point after every `every_n` epochs
/// and after the last one. `on_point` (optional) sees each point as it lands.
std::vector<CurvePoint> validation_curve(UNet<float>& model, const DatasetSplit& data, const TrainConfig& cfg,
                                         int every_n = 1,
                                         const std::function<void(const CurvePoint&)>& on_point = {});

/// `epoch,train_loss,val_loss,val_psnr,val_ssim`
std::string curve_csv(const std::vector<CurvePoint>& curve);

}  // namespace lctem

#include "lctem/train.hpp"

#include <cmath>
#include <numeric>

#include "lctem/error.hpp"
#include "lctem/random.hpp"
#include "lctem/text.hpp"

namespace lctem {

namespace {

template <typename F>
void for_batches(std::size_t n, int batch, F&& f) {
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch))
    f(start, std::min(n, start + static_cast<std::size_t>(batch)));
}

}  // namespace

AugmentedPair augment(const std::vector<PairedSample>& set, std::size_t index, const TrainConfig& cfg, Rng& rng) {
  const auto& base = set.at(index);
  AugmentedPair a{base.noisy, base.truth};
  if (cfg.mosaic_probability > 0.0 && rng.bernoulli(cfg.mosaic_probability)) {
    const int w = base.noisy.width(), h = base.noisy.height();
    std::vector<NormalizedImage> s, t;
    for (int q = 0; q < 4; ++q) {
      const auto& p = q == 0 ? base : set[static_cast<std::size_t>(rng.below(set.size()))];
      s.push_back(area_resize(p.noisy, w / 2, h / 2));
      t.push_back(area_resize(p.truth, w / 2, h / 2));
    }
    a.noisy = mosaic4(s[0], s[1], s[2], s[3]);
    a.truth = mosaic4(t[0], t[1], t[2], t[3]);
  }
  if (cfg.flips) {
    for (auto axis : {FlipAxis::Horizontal, FlipAxis::Vertical})
      if (rng.bernoulli(0.5)) {
        a.noisy = flip(a.noisy, axis);
        a.truth = flip(a.truth, axis);
      }
  }
  return a;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InputError("learning_rate must be positive");
  if (epochs < 0) throw InputError("epochs must be non-negative");
  if (batch_size < 1) throw InputError("batch_size must be at least 1");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw InputError("split_fraction must lie in (0, 1)");
  if (!(mosaic_probability >= 0.0 && mosaic_probability <= 1.0))
    throw InputError("mosaic_probability must lie in [0, 1]");
}

DatasetSplit split_dataset(std::vector<PairedSample> pairs, double fraction, std::uint64_t seed) {
  if (pairs.size() < 2) throw InputError("split_dataset: need at least two pairs");
  if (!(fraction > 0.0 && fraction < 1.0)) throw InputError("split_dataset: fraction must lie in (0, 1)");
  Rng rng(mix_seed(seed, 0x5b11));
  rng.shuffle(pairs.begin(), pairs.end());
  auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(pairs.size()) * fraction));
  n_train = std::clamp<std::size_t>(n_train, 1, pairs.size() - 1);
  DatasetSplit out;
  out.train.assign(std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.begin() + static_cast<long>(n_train)));
  out.validation.assign(std::make_move_iterator(pairs.begin() + static_cast<long>(n_train)),
                        std::make_move_iterator(pairs.end()));
  return out;
}

template <typename Scalar>
Tensor<Scalar> stack_images(const std::vector<const NormalizedImage*>& images) {
  if (images.empty()) throw InputError("stack_images: no images");
  const int h = images[0]->height(), w = images[0]->width();
  Tensor<Scalar> t(Shape{static_cast<int>(images.size()), 1, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& v = images[i]->values();
    if (v.rows() != h || v.cols() != w) throw ShapeError("stack_images: images differ in size");
    Scalar* dst = t.plane(static_cast<int>(i), 0);
    for (Eigen::Index k = 0; k < v.size(); ++k) dst[k] = static_cast<Scalar>(v.data()[k]);
  }
  return t;
}

template Tensor<float> stack_images(const std::vector<const NormalizedImage*>&);
template Tensor<double> stack_images(const std::vector<const NormalizedImage*>&);

double train_epoch(UNet<float>& model, const std::vector<PairedSample>& train, const TrainConfig& cfg, int epoch) {
  cfg.validate();
  if (train.empty()) throw InputError("train_epoch: empty training set");
  const int size = model.config().input_size;
  if (train.front().noisy.width() != size || train.front().noisy.height() != size)
    throw ShapeError("train_epoch: data is " + std::to_string(train.front().noisy.width()) + "x" +
                     std::to_string(train.front().noisy.height()) + " but the model expects " +
                     std::to_string(size));
  Rng rng(mix_seed(cfg.seed, 0x7a11000 + static_cast<std::uint64_t>(epoch)));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());

  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  double total = 0.0;
  int batch_index = 0;
  for_batches(order.size(), cfg.batch_size, [&](std::size_t lo, std::size_t hi) {
    std::vector<AugmentedPair> items;
    for (std::size_t i = lo; i < hi; ++i) items.push_back(augment(train, order[i], cfg, rng));
    std::vector<const NormalizedImage*> s, t;
    for (const auto& a : items) {
      s.push_back(&a.noisy);
      t.push_back(&a.truth);
    }
    const auto x = stack_images<float>(s);
    const auto y = stack_images<float>(t);
    const auto pred = model.forward(x, NormMode::Train, true);
    auto loss = loss_and_grad(cfg.loss, pred, y, cfg.ssim);
    if (!std::isfinite(loss.value)) {
      std::string ids;
      for (std::size_t i = lo; i < hi; ++i) ids += (ids.empty() ? "" : " ") + train[order[i]].id;
      throw NonFiniteError("non-finite " + std::string(to_string(cfg.loss)) + " loss at epoch " +
                           std::to_string(epoch + 1) + ", batch " + std::to_string(batch_index + 1) +
                           " (pairs: " + ids + "), learning rate " + format_real(cfg.learning_rate));
    }
    model.store().zero_grad();
    model.backward(loss.grad);
    adam_step(model.store(), adam);
    total += static_cast<double>(loss.value) * static_cast<double>(hi - lo);
    ++batch_index;
  });
  return total / static_cast<double>(train.size());
}

double evaluate_loss(UNet<float>& model, const std::vector<PairedSample>& pairs, const TrainConfig& cfg) {
  if (pairs.empty()) throw InputError("evaluate_loss: empty set");
  double total = 0.0;
  for_batches(pairs.size(), cfg.batch_size, [&](std::size_t lo, std::size_t hi) {
    std::vector<const NormalizedImage*> s, t;
    for (std::size_t i = lo; i < hi; ++i) {
      s.push_back(&pairs[i].noisy);
      t.push_back(&pairs[i].truth);
    }
    const auto pred = model.forward(stack_images<float>(s), NormMode::Eval);
    total += static_cast<double>(loss_value(cfg.loss, pred, stack_images<float>(t), cfg.ssim)) *
             static_cast<double>(hi - lo);
  });
  return total / static_cast<double>(pairs.size());
}

std::vector<NormalizedImage> predict(UNet<float>& model, const std::vector<PairedSample>& pairs, int batch_size) {
  std::vector<NormalizedImage> out;
  for_batches(pairs.size(), std::max(1, batch_size), [&](std::size_t lo, std::size_t hi) {
    std::vector<const NormalizedImage*> s;
    for (std::size_t i = lo; i < hi; ++i) s.push_back(&pairs[i].noisy);
    const auto pred = model.forward(stack_images<float>(s), NormMode::Eval);
    const int h = pred.shape().h, w = pred.shape().w;
    for (int b = 0; b < pred.shape().n; ++b) {
      ImageArray img(h, w);
      const float* src = pred.plane(b, 0);
      for (Eigen::Index k = 0; k < img.size(); ++k) img.data()[k] = static_cast<double>(src[k]);
      out.push_back(NormalizedImage::clamped(std::move(img)));
    }
  });
  return out;
}

NormalizedImage predict_one(UNet<float>& model, const NormalizedImage& input) {
  const auto pred = model.forward(stack_images<float>({&input}), NormMode::Eval);
  ImageArray img(pred.shape().h, pred.shape().w);
  for (Eigen::Index k = 0; k < img.size(); ++k) img.data()[k] = static_cast<double>(pred.data()[k]);
  return NormalizedImage::clamped(std::move(img));
}

EvalReport evaluate_predictions(const std::vector<NormalizedImage>& predictions,
                                const std::vector<PairedSample>& pairs, const SsimConfig& ssim_cfg) {
  if (pairs.empty()) throw InputError("evaluate: empty validation set");
  if (predictions.size() != pairs.size()) throw ShapeError("evaluate: prediction count does not match pairs");
  EvalReport r;
  double p_sum = 0.0, b_sum = 0.0, s_sum = 0.0, bs_sum = 0.0;
  bool p_inf = false, b_inf = false;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    PairScores s;
    s.id = pairs[i].id;
    s.psnr = psnr(predictions[i], pairs[i].truth);
    s.ssim = ssim(predictions[i], pairs[i].truth, ssim_cfg).mean;
    s.baseline_psnr = psnr(pairs[i].noisy, pairs[i].truth);
    s.baseline_ssim = ssim(pairs[i].noisy, pairs[i].truth, ssim_cfg).mean;
    if (s.psnr.is_unbounded()) p_inf = true;
    else p_sum += s.psnr.db();
    if (s.baseline_psnr.is_unbounded()) b_inf = true;
    else b_sum += s.baseline_psnr.db();
    s_sum += s.ssim;
    bs_sum += s.baseline_ssim;
    r.pairs.push_back(std::move(s));
  }
  const auto n = static_cast<double>(pairs.size());
  r.mean_psnr = p_inf ? Psnr::unbounded() : Psnr::decibels(p_sum / n);
  r.baseline_psnr = b_inf ? Psnr::unbounded() : Psnr::decibels(b_sum / n);
  r.mean_ssim = s_sum / n;
  r.baseline_ssim = bs_sum / n;
  return r;
}

EvalReport evaluate(UNet<float>& model, const std::vector<PairedSample>& pairs, const TrainConfig& cfg) {
  auto r = evaluate_predictions(predict(model, pairs, cfg.batch_size), pairs, cfg.ssim);
  r.loss = std::string(to_string(cfg.loss));
  r.encoder = encoder_name(model.config());
  return r;
}

std::string EvalReport::to_csv() const {
  std::string out = "loss,encoder,psnr,ssim\n";
  out += loss + "," + encoder + "," + mean_psnr.to_string() + "," + format_real(mean_ssim) + "\n";
  out += "original,," + baseline_psnr.to_string() + "," + format_real(baseline_ssim) + "\n";
  return out;
}

std::string encoder_name(const ModelConfig& config) {
  if (config.encoder_blocks == std::vector<int>{2, 2, 2, 2}) return "resnet18";
  if (config.encoder_blocks == std::vector<int>{3, 4, 6, 3}) return "resnet34";
  std::string s = "resnet";
  for (int b : config.encoder_blocks) s += "-" + std::to_string(b);
  return s;
}

std::vector<CurvePoint> validation_curve(UNet<float>& model, const DatasetSplit& data, const TrainConfig& cfg,
                                         int every_n, const std::function<void(const CurvePoint&)>& on_point) {
  cfg.validate();
  if (every_n < 1) throw InputError("validation_curve: every_n must be at least 1");
  std::vector<CurvePoint> curve;
  for (int e = 0; e < cfg.epochs; ++e) {
    const double train_loss = train_epoch(model, data.train, cfg, e);
    if ((e + 1) % every_n != 0 && e + 1 != cfg.epochs) continue;
    CurvePoint p;
    p.epoch = e + 1;
    p.train_loss = train_loss;
    p.val_loss = evaluate_loss(model, data.validation, cfg);
    const auto r = evaluate_predictions(predict(model, data.validation, cfg.batch_size), data.validation, cfg.ssim);
    p.val_psnr = r.mean_psnr;
    p.val_ssim = r.mean_ssim;
    curve.push_back(p);
    if (on_point) on_point(p);
  }
  return curve;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "epoch,train_loss,val_loss,val_psnr,val_ssim\n";
  for (const auto& p : curve)
    out += std::to_string(p.epoch) + "," + format_real(p.train_loss) + "," + format_real(p.val_loss) + "," +
           p.val_psnr.to_string() + "," + format_real(p.val_ssim) + "\n";
  return out;
}

}  // namespace lctem

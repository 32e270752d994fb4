#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "lctem/random.hpp"
#include "lctem/synth.hpp"
#include "lctem/train.hpp"

using namespace lctem;

namespace {

std::vector<PairedSample> tiny_pairs(int n) {
  std::vector<PairedSample> v;
  for (int i = 0; i < n; ++i)
    v.emplace_back(NormalizedImage(1, 1, 0.1), NormalizedImage(1, 1, 0.2), 1.0, 100.0, "p" + std::to_string(i));
  return v;
}

ModelConfig tiny_model(NormKind norm = NormKind::Batch) {
  ModelConfig c;
  c.encoder_blocks = {1, 1};
  c.base_width = 4;
  c.input_size = 32;
  c.norm = norm;
  return c;
}

TrainConfig quiet(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.flips = false;
  c.mosaic_probability = 0.0;
  c.seed = 3;
  return c;
}

ImageArray corner_mark(int size, double level) {
  ImageArray a = ImageArray::Zero(size, size);
  a(0, 0) = level;
  a(0, 1) = level / 2;
  return a;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.epochs, 2000);
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), InputError);
  c = TrainConfig{};
  c.split_fraction = 1.0;
  EXPECT_THROW(c.validate(), InputError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(SplitDataset, PublishedSizes) {
  auto s = split_dataset(tiny_pairs(1204), 0.9, 0);
  EXPECT_EQ(s.train.size(), 1083u);
  EXPECT_EQ(s.validation.size(), 121u);
  auto t = split_dataset(tiny_pairs(10), 0.9, 0);
  EXPECT_EQ(t.train.size(), 9u);
  EXPECT_EQ(t.validation.size(), 1u);
}

TEST(SplitDataset, PartitionAndDeterminism) {
  auto a = split_dataset(tiny_pairs(50), 0.9, 7);
  auto b = split_dataset(tiny_pairs(50), 0.9, 7);
  auto c = split_dataset(tiny_pairs(50), 0.9, 8);
  std::set<std::string> seen;
  for (const auto& p : a.train) seen.insert(p.id);
  for (const auto& p : a.validation) EXPECT_TRUE(seen.insert(p.id).second);
  EXPECT_EQ(seen.size(), 50u);
  bool differs = false;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].id, b.train[i].id);
    differs |= a.train[i].id != c.train[i].id;
  }
  EXPECT_TRUE(differs);
  EXPECT_THROW(split_dataset(tiny_pairs(1), 0.9, 0), InputError);
  EXPECT_THROW(split_dataset({}, 0.9, 0), InputError);
  EXPECT_EQ(split_dataset(tiny_pairs(2), 0.9, 0).validation.size(), 1u);
}

TEST(Synth, IdentityDegradationReturnsTruth) {
  auto p = synth_pair(5, 64, DegradeSpec::identity());
  EXPECT_EQ(p.noisy, p.truth);
}

TEST(Synth, SeedIsReproducible) {
  auto a = synth_pair(9, 48), b = synth_pair(9, 48), c = synth_pair(10, 48);
  EXPECT_EQ(a.noisy, b.noisy);
  EXPECT_EQ(a.truth, b.truth);
  EXPECT_FALSE(a.truth == c.truth);
  EXPECT_NEAR(a.truth_dose / a.noisy_dose, 100.0, 1e-9);
  EXPECT_THROW(synth_pair(1, 16), ShapeError);
}

TEST(Synth, DefaultBaselineSsimInLowDoseRegime) {
  auto pairs = synth_dataset(200, 64, 11);
  double sum = 0.0;
  for (const auto& p : pairs) sum += ssim(p.noisy, p.truth).mean;
  const double mean = sum / 200.0;
  EXPECT_GE(mean, 0.05);
  EXPECT_LE(mean, 0.4);
}

TEST(Augment, FlipsMoveBothImagesTogether) {
  std::vector<PairedSample> set;
  set.emplace_back(NormalizedImage(corner_mark(8, 1.0)), NormalizedImage(corner_mark(8, 0.5)), 1, 1, "m");
  TrainConfig cfg;
  cfg.mosaic_probability = 0.0;
  Rng rng(1);
  std::set<std::pair<int, int>> corners;
  for (int i = 0; i < 40; ++i) {
    auto a = augment(set, 0, cfg, rng);
    EXPECT_TRUE(((a.noisy.values() * 0.5) == a.truth.values()).all());
    Eigen::Index r, c;
    a.noisy.values().maxCoeff(&r, &c);
    corners.insert({static_cast<int>(r), static_cast<int>(c)});
  }
  EXPECT_EQ(corners.size(), 4u);
}

TEST(Augment, MosaicKeepsQuadrantsPaired) {
  std::vector<PairedSample> set;
  for (int i = 0; i < 6; ++i) {
    ImageArray t = ImageArray::Constant(8, 8, 0.1 * (i + 1));
    set.emplace_back(NormalizedImage(ImageArray(t * 0.5)), NormalizedImage(t), 1, 1, "c" + std::to_string(i));
  }
  TrainConfig cfg;
  cfg.mosaic_probability = 1.0;
  Rng rng(2);
  bool mixed = false;
  for (int i = 0; i < 20; ++i) {
    auto a = augment(set, 1, cfg, rng);
    EXPECT_EQ(a.noisy.width(), 8);
    for (int q = 0; q < 4; ++q) {
      const auto s = quadrant(a.noisy, q), t = quadrant(a.truth, q);
      EXPECT_LT(((s.values() * 2.0) - t.values()).abs().maxCoeff(), 1e-15);
      mixed |= t(0, 0) != a.truth(0, 0);
    }
  }
  EXPECT_TRUE(mixed);
}

TEST(TrainEpoch, ZeroLearningRateLeavesParametersAndMatchesEvalLoss) {
  auto data = synth_dataset(6, 32, 4);
  UNet<float> model(tiny_model(NormKind::None), 1);
  std::map<std::string, Tensor<float>> before;
  for (const auto& [n, p] : model.store().params()) before.emplace(n, p.value);
  auto cfg = quiet(1);
  cfg.learning_rate = 1e-300;  // positive but below float resolution of every update
  const double eval_before = evaluate_loss(model, data, cfg);
  const double l = train_epoch(model, data, cfg, 0);
  for (const auto& [n, p] : model.store().params()) EXPECT_TRUE((p.value.values() == before.at(n).values()).all()) << n;
  EXPECT_NEAR(l, eval_before, 1e-6);
  EXPECT_EQ(evaluate_loss(model, data, cfg), eval_before);
}

TEST(TrainEpoch, OverfitsSinglePair) {
  std::vector<PairedSample> one{synth_pair(21, 32)};
  UNet<float> model(tiny_model(), 2);
  auto cfg = quiet(1);
  cfg.learning_rate = 1e-3;
  cfg.loss = LossKind::L2;
  std::vector<double> trace;
  for (int e = 0; e < 200; ++e) trace.push_back(train_epoch(model, one, cfg, e));
  EXPECT_LT(trace.back(), 0.25 * trace.front());
  int increases = 0;
  for (std::size_t i = 1; i < trace.size(); ++i) increases += trace[i] >= trace[i - 1];
  EXPECT_EQ(increases, 0);
}

TEST(TrainEpoch, FixedSeedGivesIdenticalTrace) {
  auto data = synth_dataset(8, 32, 5);
  for (bool augmented : {false, true}) {
    std::vector<double> traces[2];
    for (auto& tr : traces) {
      UNet<float> model(tiny_model(), 3);
      auto cfg = quiet(1);
      cfg.flips = augmented;
      cfg.mosaic_probability = augmented ? 0.5 : 0.0;
      for (int e = 0; e < 3; ++e) tr.push_back(train_epoch(model, data, cfg, e));
    }
    EXPECT_EQ(traces[0], traces[1]);
  }
}

TEST(TrainEpoch, NonFiniteLossAbortsWithDiagnostics) {
  auto data = synth_dataset(4, 32, 6);
  UNet<float> model(tiny_model(), 4);
  model.store().param("head.bias").value.values().setConstant(std::nanf(""));
  try {
    train_epoch(model, data, quiet(1), 0);
    FAIL();
  } catch (const NonFiniteError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("epoch 1"), std::string::npos) << m;
    EXPECT_NE(m.find("syn"), std::string::npos) << m;
  }
}

TEST(TrainEpoch, SizeMismatchIsShapeError) {
  auto data = synth_dataset(2, 64, 6);
  UNet<float> model(tiny_model(), 4);
  EXPECT_THROW(train_epoch(model, data, quiet(1), 0), ShapeError);
}

TEST(Evaluate, IdentityPredictionsEqualBaseline) {
  auto data = synth_dataset(5, 32, 7);
  std::vector<NormalizedImage> same;
  for (const auto& p : data) same.push_back(p.noisy);
  auto r = evaluate_predictions(same, data);
  EXPECT_EQ(r.mean_ssim, r.baseline_ssim);
  EXPECT_EQ(r.mean_psnr.db(), r.baseline_psnr.db());
  double s = 0, p = 0;
  for (const auto& row : r.pairs) {
    s += row.ssim;
    p += row.psnr.db();
  }
  EXPECT_EQ(r.mean_ssim, s / 5);
  EXPECT_EQ(r.mean_psnr.db(), p / 5);
  EXPECT_THROW(evaluate_predictions({}, {}), InputError);
}

TEST(Evaluate, BaselineIndependentOfModel) {
  auto data = synth_dataset(4, 32, 8);
  TrainConfig cfg;
  UNet<float> a(tiny_model(), 1), b(tiny_model(), 2);
  auto ra = evaluate(a, data, cfg), rb = evaluate(b, data, cfg);
  EXPECT_EQ(ra.baseline_ssim, rb.baseline_ssim);
  EXPECT_EQ(ra.baseline_psnr.db(), rb.baseline_psnr.db());
  EXPECT_NE(ra.mean_ssim, rb.mean_ssim);
  EXPECT_EQ(ra.encoder, "resnet-1-1");
  const auto csv = ra.to_csv();
  EXPECT_EQ(csv.rfind("loss,encoder,psnr,ssim\nssim,resnet-1-1,", 0), 0u) << csv;
  EXPECT_NE(csv.find("\noriginal,,"), std::string::npos);
}

TEST(Evaluate, EncoderNames) {
  ModelConfig c;
  c.encoder_blocks = {2, 2, 2, 2};
  EXPECT_EQ(encoder_name(c), "resnet18");
  c.encoder_blocks = {3, 4, 6, 3};
  EXPECT_EQ(encoder_name(c), "resnet34");
}

TEST(ValidationCurve, EmptyForZeroEpochs) {
  auto data = split_dataset(synth_dataset(4, 32, 9), 0.5, 0);
  UNet<float> model(tiny_model(), 1);
  EXPECT_TRUE(validation_curve(model, data, quiet(0)).empty());
  EXPECT_EQ(curve_csv({}), "epoch,train_loss,val_loss,val_psnr,val_ssim\n");
}

TEST(ValidationCurve, DeterministicAndSampledEveryN) {
  auto data = split_dataset(synth_dataset(6, 32, 10), 0.5, 0);
  std::string csv[2];
  for (auto& out : csv) {
    UNet<float> model(tiny_model(), 5);
    auto cfg = quiet(5);
    cfg.flips = true;
    cfg.mosaic_probability = 0.5;
    auto curve = validation_curve(model, data, cfg, 2);
    ASSERT_EQ(curve.size(), 3u);
    EXPECT_EQ(curve[0].epoch, 2);
    EXPECT_EQ(curve[1].epoch, 4);
    EXPECT_EQ(curve[2].epoch, 5);
    out = curve_csv(curve);
  }
  EXPECT_EQ(csv[0], csv[1]);
}

#include <gtest/gtest.h>

#include <random>

#include "lctem/layers.hpp"
#include "lctem/losses.hpp"
#include "lctem/parallel.hpp"
#include "lctem/params.hpp"
#include "oracles.hpp"

using namespace lctem;

namespace {

std::vector<double> to_vec(const Tensor<double>& t) {
  return {t.data(), t.data() + t.size()};
}

double dot(const Tensor<double>& a, const Tensor<double>& b) { return (a.values() * b.values()).sum(); }

}  // namespace

TEST(Conv2d, PointwiseScaling) {
  Tensor<double> x(Shape{1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) x.data()[i] = i;
  Tensor<double> w(Shape{1, 1, 1, 1}, 2.0), b(Shape{1, 1, 1, 1});
  auto y = conv2d_forward(x, w, &b, 1, 0);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(y.data()[i], 2.0 * i);
}

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(1);
  Tensor<double> x(Shape{2, 1, 5, 7});
  oracle::fill_uniform(x, rng);
  Tensor<double> w(Shape{1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 1.0;
  auto y = conv2d_forward(x, w, static_cast<const Tensor<double>*>(nullptr), 1, 1);
  EXPECT_TRUE((y.values() == x.values()).all());
}

TEST(Conv2d, MatchesNaiveLoopsBitExact) {
  std::mt19937_64 rng(7);
  for (int stride : {1, 2})
    for (int k : {1, 3, 7})
      for (int pad : {0, k / 2}) {
        Tensor<double> x(Shape{2, 4, 8, 8}), w(Shape{5, 4, k, k}), b(Shape{1, 5, 1, 1});
        oracle::fill_uniform(x, rng);
        oracle::fill_uniform(w, rng);
        oracle::fill_uniform(b, rng);
        if (8 + 2 * pad < k) continue;
        auto got = conv2d_forward(x, w, &b, stride, pad);
        auto want = oracle::conv2d(x, w, &b, stride, pad);
        ASSERT_EQ(got.shape(), want.shape());
        EXPECT_TRUE((got.values() == want.values()).all()) << "k=" << k << " s=" << stride << " p=" << pad;
      }
}

TEST(Conv2d, RandomSmallCaseWithinTolerance) {
  std::mt19937_64 rng(3);
  Tensor<double> x(Shape{1, 2, 4, 4}), w(Shape{3, 2, 3, 3}), b(Shape{1, 3, 1, 1});
  oracle::fill_uniform(x, rng);
  oracle::fill_uniform(w, rng);
  auto got = conv2d_forward(x, w, &b, 1, 1);
  auto want = oracle::conv2d(x, w, &b, 1, 1);
  EXPECT_LT((got.values() - want.values()).abs().maxCoeff(), 1e-12);
}

TEST(Conv2d, OutputSizeFormula) {
  Tensor<float> x(Shape{1, 1, 9, 10}), w(Shape{2, 1, 3, 3});
  auto y = conv2d_forward(x, w, static_cast<const Tensor<float>*>(nullptr), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 5, 5}));
}

TEST(Conv2d, ChannelMismatchThrows) {
  Tensor<float> x(Shape{1, 2, 4, 4}), w(Shape{1, 3, 3, 3});
  EXPECT_THROW(conv2d_forward(x, w, static_cast<const Tensor<float>*>(nullptr), 1, 1), ShapeError);
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int stride : {1, 2})
    for (int k : {1, 3}) {
      const int pad = k / 2;
      Tensor<double> x(Shape{2, 3, 6, 5}), w(Shape{5, 3, k, k}), b(Shape{1, 5, 1, 1});
      oracle::fill_uniform(x, rng);
      oracle::fill_uniform(w, rng);
      oracle::fill_uniform(b, rng);
      auto y0 = conv2d_forward(x, w, &b, stride, pad);
      Tensor<double> r(y0.shape());
      oracle::fill_uniform(r, rng);
      auto f = [&] { return dot(conv2d_forward(x, w, &b, stride, pad), r); };
      auto g = conv2d_backward(x, w, r, stride, pad, true);
      EXPECT_LT(oracle::rel_error(to_vec(g.input), oracle::central_diff<double>(f, x.data(), x.size())), 1e-6);
      EXPECT_LT(oracle::rel_error(to_vec(g.weight), oracle::central_diff<double>(f, w.data(), w.size())), 1e-6);
      EXPECT_LT(oracle::rel_error(to_vec(g.bias), oracle::central_diff<double>(f, b.data(), b.size())), 1e-6);
    }
}

TEST(Conv2d, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(2);
  Tensor<double> x(Shape{1, 2, 4, 4}), w(Shape{3, 2, 3, 3});
  oracle::fill_uniform(x, rng);
  oracle::fill_uniform(w, rng);
  auto g = conv2d_backward(x, w, Tensor<double>(Shape{1, 3, 4, 4}), 1, 1, true);
  EXPECT_EQ(g.input.values().abs().maxCoeff(), 0.0);
  EXPECT_EQ(g.weight.values().abs().maxCoeff(), 0.0);
  EXPECT_EQ(g.bias.values().abs().maxCoeff(), 0.0);
}

TEST(Conv2d, SinglePixelWeightGradientIsInput) {
  Tensor<double> x(Shape{1, 1, 1, 1}, 0.37), w(Shape{1, 1, 1, 1}, 2.0), up(Shape{1, 1, 1, 1}, 1.0);
  auto g = conv2d_backward(x, w, up, 1, 0, false);
  EXPECT_EQ(g.weight.data()[0], 0.37);
}

TEST(Conv2d, ThreadCountDoesNotChangeResults) {
  std::mt19937_64 rng(5);
  Tensor<float> x(Shape{3, 6, 16, 16}), w(Shape{9, 6, 3, 3}), up(Shape{3, 9, 8, 8});
  oracle::fill_uniform(x, rng);
  oracle::fill_uniform(w, rng);
  oracle::fill_uniform(up, rng);
  const int saved = num_threads();
  set_num_threads(1);
  auto y1 = conv2d_forward(x, w, static_cast<const Tensor<float>*>(nullptr), 2, 1);
  auto g1 = conv2d_backward(x, w, up, 2, 1, true);
  set_num_threads(4);
  auto y4 = conv2d_forward(x, w, static_cast<const Tensor<float>*>(nullptr), 2, 1);
  auto g4 = conv2d_backward(x, w, up, 2, 1, true);
  set_num_threads(saved);
  EXPECT_TRUE((y1.values() == y4.values()).all());
  EXPECT_TRUE((g1.input.values() == g4.input.values()).all());
  EXPECT_TRUE((g1.weight.values() == g4.weight.values()).all());
}

TEST(Activations, ReluAndSigmoidValues) {
  Tensor<double> x(Shape{1, 1, 1, 3});
  x.data()[0] = -1;
  x.data()[1] = 2;
  x.data()[2] = 0;
  auto r = relu_forward(x);
  EXPECT_EQ(r.data()[0], 0.0);
  EXPECT_EQ(r.data()[1], 2.0);
  auto s = sigmoid_forward(x);
  EXPECT_EQ(s.data()[2], 0.5);
  Tensor<double> ones(x.shape(), 1.0);
  EXPECT_EQ(sigmoid_backward(s, ones).data()[2], 0.25);
}

TEST(Activations, SigmoidStaysInsideOpenInterval) {
  Tensor<float> x(Shape{1, 1, 1, 4});
  x.data()[0] = -200;
  x.data()[1] = 200;
  x.data()[2] = 40;
  x.data()[3] = -90;
  auto s = sigmoid_forward(x);
  for (int i = 0; i < 4; ++i) {
    EXPECT_GT(s.data()[i], 0.0f);
    EXPECT_LT(s.data()[i], 1.0f);
  }
}

TEST(Activations, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  Tensor<double> x(Shape{2, 2, 3, 3}), r(Shape{2, 2, 3, 3});
  oracle::fill_uniform(x, rng);
  oracle::fill_uniform(r, rng);
  for (std::int64_t i = 0; i < x.size(); ++i)
    if (std::abs(x.data()[i]) < 1e-3) x.data()[i] = 0.5;
  {
    auto f = [&] { return dot(relu_forward(x), r); };
    auto g = relu_backward(relu_forward(x), r);
    EXPECT_LT(oracle::rel_error(to_vec(g), oracle::central_diff<double>(f, x.data(), x.size())), 1e-6);
  }
  {
    auto f = [&] { return dot(sigmoid_forward(x), r); };
    auto g = sigmoid_backward(sigmoid_forward(x), r);
    EXPECT_LT(oracle::rel_error(to_vec(g), oracle::central_diff<double>(f, x.data(), x.size())), 1e-6);
  }
}

TEST(Upsample, ReplicatesAndSumsBack) {
  Tensor<double> x(Shape{1, 1, 1, 1}, 1.0);
  auto y = upsample_nearest2x_forward(x);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_TRUE((y.values() == 1.0).all());
  auto g = upsample_nearest2x_backward(Tensor<double>(Shape{1, 1, 2, 2}, 1.0));
  EXPECT_EQ(g.data()[0], 4.0);
}

TEST(Upsample, BlockMeanRoundTrip) {
  std::mt19937_64 rng(8);
  Tensor<double> x(Shape{2, 3, 4, 5});
  oracle::fill_uniform(x, rng);
  auto back = upsample_nearest2x_backward(upsample_nearest2x_forward(x));
  EXPECT_LT((back.values() / 4.0 - x.values()).abs().maxCoeff(), 1e-15);
}

TEST(Upsample, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  Tensor<double> x(Shape{1, 2, 3, 3}), r(Shape{1, 2, 6, 6});
  oracle::fill_uniform(x, rng);
  oracle::fill_uniform(r, rng);
  auto f = [&] { return dot(upsample_nearest2x_forward(x), r); };
  EXPECT_LT(oracle::rel_error(to_vec(upsample_nearest2x_backward(r)),
                              oracle::central_diff<double>(f, x.data(), x.size())),
            1e-6);
}

TEST(Concat, SplitInvertsConcat) {
  std::mt19937_64 rng(10);
  Tensor<double> a(Shape{2, 2, 3, 3}), b(Shape{2, 3, 3, 3});
  oracle::fill_uniform(a, rng);
  oracle::fill_uniform(b, rng);
  auto [a2, b2] = split_channels(concat_channels(a, b), 2);
  EXPECT_TRUE((a2.values() == a.values()).all());
  EXPECT_TRUE((b2.values() == b.values()).all());
}

class BatchNormTest : public ::testing::Test {
 protected:
  Tensor<double> gamma{Shape{1, 3, 1, 1}}, beta{Shape{1, 3, 1, 1}};
  Tensor<double> mean{Shape{1, 3, 1, 1}}, var{Shape{1, 3, 1, 1}, 1.0};
};

TEST_F(BatchNormTest, TrainModeStandardizes) {
  std::mt19937_64 rng(12);
  Tensor<double> x(Shape{4, 3, 5, 5});
  oracle::fill_uniform(x, rng, 2, 5);
  gamma.values().setOnes();
  auto y = batchnorm_forward(x, gamma, beta, mean, var, NormMode::Train, 1e-5, 0.1,
                             static_cast<BatchNormCache<double>*>(nullptr));
  for (int c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) {
        s += y.plane(n, c)[i];
        s2 += y.plane(n, c)[i] * y.plane(n, c)[i];
      }
    EXPECT_NEAR(s / 100, 0.0, 1e-12);
    EXPECT_NEAR(s2 / 100, 1.0, 1e-3);
  }
  EXPECT_GT(mean.values().minCoeff(), 0.2);  // running mean moved toward ~3.5
}

TEST_F(BatchNormTest, EvalWithUnitStatsIsIdentity) {
  std::mt19937_64 rng(13);
  Tensor<double> x(Shape{2, 3, 4, 4});
  oracle::fill_uniform(x, rng);
  gamma.values().setOnes();
  auto y = batchnorm_forward(x, gamma, beta, mean, var, NormMode::Eval, 0.0, 0.1,
                             static_cast<BatchNormCache<double>*>(nullptr));
  EXPECT_LT((y.values() - x.values()).abs().maxCoeff(), 1e-15);
}

TEST_F(BatchNormTest, TrainGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(14);
  Tensor<double> x(Shape{3, 3, 4, 4}), r(Shape{3, 3, 4, 4});
  oracle::fill_uniform(x, rng);
  oracle::fill_uniform(r, rng);
  oracle::fill_uniform(gamma, rng, 0.5, 1.5);
  oracle::fill_uniform(beta, rng);
  auto f = [&] {
    Tensor<double> m(mean.shape()), v(var.shape(), 1.0);
    return dot(batchnorm_forward(x, gamma, beta, m, v, NormMode::Train, 1e-5, 0.1,
                                 static_cast<BatchNormCache<double>*>(nullptr)),
               r);
  };
  BatchNormCache<double> cache;
  batchnorm_forward(x, gamma, beta, mean, var, NormMode::Train, 1e-5, 0.1, &cache);
  auto g = batchnorm_backward(r, gamma, cache, NormMode::Train);
  EXPECT_LT(oracle::rel_error(to_vec(g.input), oracle::central_diff<double>(f, x.data(), x.size())), 1e-6);
  EXPECT_LT(oracle::rel_error(to_vec(g.gamma), oracle::central_diff<double>(f, gamma.data(), gamma.size())), 1e-6);
  EXPECT_LT(oracle::rel_error(to_vec(g.beta), oracle::central_diff<double>(f, beta.data(), beta.size())), 1e-6);
}

TEST_F(BatchNormTest, ChannelMismatchThrows) {
  Tensor<double> x(Shape{1, 2, 2, 2});
  EXPECT_THROW(batchnorm_forward(x, gamma, beta, mean, var, NormMode::Train, 1e-5, 0.1,
                                 static_cast<BatchNormCache<double>*>(nullptr)),
               ShapeError);
}

// conv -> bn -> relu -> conv -> sigmoid, all layer objects sharing one store.
TEST(Composition, ThreeLayerStackMatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  ParamStore<double> store;
  Conv2d<double> c1(store, "c1", 2, 3, 3, 2, 1, false);
  BatchNorm2d<double> bn(store, "bn", 3);
  Conv2d<double> c2(store, "c2", 3, 1, 3, 1, 1, true);
  for (auto& [name, p] : store.params()) oracle::fill_uniform(p.value, rng, -0.8, 0.8);
  Tensor<double> x(Shape{2, 2, 6, 6});
  oracle::fill_uniform(x, rng);
  Tensor<double> r(Shape{2, 1, 3, 3});
  oracle::fill_uniform(r, rng);
  auto run = [&](bool keep) {
    return sigmoid_forward(c2.forward(relu_forward(bn.forward(c1.forward(x, keep), NormMode::Train, keep)), keep));
  };
  const auto saved = store.buffers();
  auto restore = [&] {
    for (auto& [name, b] : store.buffers()) b.values() = saved.at(name).values();
  };
  auto f = [&] {
    const double v = dot(run(false), r);
    restore();
    return v;
  };
  auto out = run(true);
  restore();
  store.zero_grad();
  Tensor<double> mid = relu_forward(bn.forward(c1.forward(x, true), NormMode::Train, true));
  restore();
  c2.forward(mid, true);
  auto g_mid = c2.backward(sigmoid_backward(out, r));
  auto g_x = c1.backward(bn.backward(relu_backward(mid, g_mid)));
  EXPECT_LT(oracle::rel_error(to_vec(g_x), oracle::central_diff<double>(f, x.data(), x.size())), 1e-6);
  for (auto& [name, p] : store.params()) {
    EXPECT_LT(oracle::rel_error(to_vec(p.grad), oracle::central_diff<double>(f, p.value.data(), p.value.size())), 1e-6)
        << name;
  }
}

TEST(SsimLoss, ZeroGradientAtEquality) {
  std::mt19937_64 rng(16);
  Tensor<double> x(Shape{1, 1, 16, 16});
  oracle::fill_uniform(x, rng, 0, 1);
  auto g = ssim_loss_backward(x, x, SsimConfig{});
  EXPECT_LT(g.values().abs().maxCoeff(), 1e-15);
}

TEST(SsimLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  for (int w : {3, 11}) {
    Tensor<double> x(Shape{2, 1, 16, 16}), y(Shape{2, 1, 16, 16});
    oracle::fill_uniform(x, rng, 0, 1);
    oracle::fill_uniform(y, rng, 0, 1);
    SsimConfig cfg;
    cfg.window_size = w;
    auto f = [&] { return double(loss_value(LossKind::Ssim, x, y, cfg)); };
    auto r = loss_and_grad(LossKind::Ssim, x, y, cfg);
    EXPECT_NEAR(r.value, f(), 1e-15);
    EXPECT_LT(oracle::rel_error(to_vec(r.grad), oracle::central_diff<double>(f, x.data(), x.size())), 1e-6)
        << "window " << w;
  }
}

TEST(SsimLoss, L1AndL2ClosedFormGradients) {
  Tensor<double> x(Shape{1, 1, 1, 2}), y(Shape{1, 1, 1, 2});
  x.data()[0] = 0.5;
  x.data()[1] = 0.1;
  y.data()[0] = 0.2;
  y.data()[1] = 0.4;
  auto l1 = loss_and_grad(LossKind::L1, x, y, SsimConfig{});
  EXPECT_DOUBLE_EQ(l1.value, 0.3);
  EXPECT_EQ(l1.grad.data()[0], 0.5);
  EXPECT_EQ(l1.grad.data()[1], -0.5);
  auto l2 = loss_and_grad(LossKind::L2, x, y, SsimConfig{});
  EXPECT_DOUBLE_EQ(l2.value, 0.09);
  EXPECT_DOUBLE_EQ(l2.grad.data()[0], 2 * 0.3 / 2);
  EXPECT_DOUBLE_EQ(l2.grad.data()[1], 2 * -0.3 / 2);
}

class AdamTest : public ::testing::Test {
 protected:
  ParamStore<double> store;
  Parameter<double>* p = nullptr;
  void SetUp() override {
    p = &store.add("p", Shape{1, 1, 1, 3});
    p->value.values() << 0.5, -1.0, 2.0;
  }
};

TEST_F(AdamTest, FirstStepMovesByLearningRate) {
  p->grad.values().setOnes();
  AdamConfig cfg;
  cfg.learning_rate = 1e-3;
  adam_step(store, cfg);
  EXPECT_NEAR(p->value.data()[0], 0.5 - 1e-3, 1e-10);
  EXPECT_EQ(store.step(), 1);
}

TEST_F(AdamTest, ZeroGradientStillCountsStep) {
  const auto before = p->value.values();
  adam_step(store, AdamConfig{});
  EXPECT_TRUE((p->value.values() == before).all());
  EXPECT_EQ(store.step(), 1);
}

TEST_F(AdamTest, ZeroLearningRateIsNoOp) {
  p->grad.values().setConstant(3.0);
  const auto before = p->value.values();
  AdamConfig cfg;
  cfg.learning_rate = 0.0;
  adam_step(store, cfg);
  adam_step(store, cfg);
  EXPECT_TRUE((p->value.values() == before).all());
}

TEST_F(AdamTest, MatchesScalarReferenceTrace) {
  p->grad.values().setConstant(0.7);
  oracle::AdamTrace ref{0.5};
  AdamConfig cfg;
  for (int i = 0; i < 2; ++i) {
    adam_step(store, cfg);
    ref.step(0.7, cfg.learning_rate);
  }
  EXPECT_NEAR(p->value.data()[0], ref.p, 1e-12);
}

TEST_F(AdamTest, NonFiniteGradientPoisonsWithoutMutation) {
  p->grad.values() << 1.0, std::numeric_limits<double>::quiet_NaN(), 1.0;
  const auto before = p->value.values();
  EXPECT_THROW(adam_step(store, AdamConfig{}), NonFiniteError);
  EXPECT_TRUE((p->value.values() == before).all());
  EXPECT_TRUE(store.poisoned());
  p->grad.values().setOnes();
  EXPECT_THROW(adam_step(store, AdamConfig{}), NonFiniteError);
}

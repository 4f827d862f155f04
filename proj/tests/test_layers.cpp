#include <gtest/gtest.h>

#include <cmath>

#include "coronet/error.hpp"
#include "coronet/layers.hpp"
#include "coronet/rng.hpp"
#include "support/oracles.hpp"

using namespace coronet;
using namespace coronet::nn;
using coronet::testkit::random_tensor;

TEST(AxisWindow, ValidAndSame) {
  EXPECT_EQ(axis_window(224, 3, 2, Padding::valid).out, 111u);
  EXPECT_EQ(axis_window(111, 3, 1, Padding::valid).out, 109u);
  const auto s = axis_window(109, 3, 2, Padding::same);
  EXPECT_EQ(s.out, 55u);
  EXPECT_EQ(s.pad_before, 1u);
  // Even total padding of 1 puts the extra pixel after.
  const auto e = axis_window(4, 2, 1, Padding::same);
  EXPECT_EQ(e.out, 4u);
  EXPECT_EQ(e.pad_before, 0u);
  EXPECT_THROW(axis_window(2, 3, 1, Padding::valid), ShapeError);
  EXPECT_THROW(axis_window(0, 1, 1, Padding::same), ShapeError);
}

TEST(AxisWindow, AgreesWithIndependentRule) {
  for (std::size_t in = 1; in < 20; ++in)
    for (std::size_t k = 1; k <= 5; ++k)
      for (std::size_t s = 1; s <= 3; ++s) {
        const auto w = axis_window(in, k, s, Padding::same);
        const auto o = testkit::naive_window(in, k, s, true);
        EXPECT_EQ(w.out, o.out);
        EXPECT_EQ(w.pad_before, o.pad);
        if (k <= in) EXPECT_EQ(axis_window(in, k, s, Padding::valid).out, testkit::naive_window(in, k, s, false).out);
      }
}

class ConvOracle : public ::testing::TestWithParam<int> {};

TEST_P(ConvOracle, FastPathMatchesNaiveLoops) {
  for (const auto& kind : testkit::conv_oracle_kinds()) {
    const auto c = testkit::conv_oracle_case(kind, std::uint64_t(GetParam()));
    EXPECT_LT(c.error, 1e-5) << c.description;
  }
}

INSTANTIATE_TEST_SUITE_P(Randomised, ConvOracle, ::testing::Range(0, 30));

TEST(Conv2D, HandComputedExample) {
  // 3x3 input 1..9, 2x2 kernel of ones, valid: sums of 2x2 windows.
  Conv2D spec{1, 1, 2, 2, 1, Padding::valid, true};
  LayerParams p = make_params(spec, nullptr);
  for (float& v : p.get("kernel").values()) v = 1.0f;
  p.get("bias")[0] = 0.5f;
  const Tensor x(Shape{1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  EXPECT_EQ(conv2d_forward(x, spec, p), Tensor(Shape{1, 2, 2, 1}, {12.5f, 16.5f, 24.5f, 28.5f}));
}

TEST(Conv2D, PointwiseIsChannelMatmul) {
  Rng rng(4);
  Conv2D spec{3, 2, 1, 1, 1, Padding::valid, false};
  const LayerParams p = make_params(spec, &rng);
  const Tensor x = random_tensor(Shape{2, 4, 5, 3}, rng);
  const Tensor y = conv2d_forward(x, spec, p);
  const Tensor flat = matmul(x.reshape(Shape{40, 3}), p.get("kernel").reshape(Shape{3, 2}));
  EXPECT_LT(testkit::scaled_error(y.reshape(Shape{40, 2}), flat), 1e-6);
}

TEST(Conv2D, RejectsWrongChannels) {
  Conv2D spec{3, 2, 3, 3, 1, Padding::same, false};
  const LayerParams p = make_params(spec, nullptr);
  EXPECT_THROW(conv2d_forward(Tensor(Shape{1, 5, 5, 2}), spec, p), ShapeError);
  const Shape in{5, 5, 2};
  EXPECT_THROW(output_shape(spec, std::span<const Shape>(&in, 1)), ShapeError);
}

TEST(SeparableConv2D, ParameterShapesAndCount) {
  SeparableConv2D spec{64, 128, 3, 3, 1, Padding::same, false};
  const LayerParams p = make_params(spec, nullptr);
  EXPECT_EQ(p.get("depthwise_kernel").shape(), (Shape{3, 3, 64}));
  EXPECT_EQ(p.get("pointwise_kernel").shape(), (Shape{1, 1, 64, 128}));
  EXPECT_EQ(p.find("bias"), nullptr);
  std::size_t total = 0;
  for (const auto& e : p) total += e.value.numel();
  EXPECT_EQ(total, 3u * 3 * 64 + 64u * 128);
}

TEST(MaxPool2D, SamePaddingNeverPicksPadding) {
  Tensor x(Shape{1, 3, 3, 1});
  for (float& v : x.values()) v = -5.0f;
  x.at({0, 2, 2, 0}) = -1.0f;
  const Tensor y = maxpool2d_forward(x, MaxPool2D{3, 3, 2, Padding::same});
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2, 1}));
  for (float v : y.values()) EXPECT_LT(v, 0.0f);
  EXPECT_FLOAT_EQ(y.at({0, 1, 1, 0}), -1.0f);
}

TEST(MaxPool2D, ArgmaxPointsAtMaximum) {
  Rng rng(8);
  const Tensor x = random_tensor(Shape{2, 5, 5, 3}, rng);
  std::vector<std::size_t> argmax;
  const Tensor y = maxpool2d_forward(x, MaxPool2D{2, 2, 2, Padding::valid}, &argmax);
  ASSERT_EQ(argmax.size(), y.numel());
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(x[argmax[i]], y[i]);
}

TEST(GlobalAvgPool2D, AveragesEachChannel) {
  const Tensor x(Shape{1, 2, 2, 2}, {1, 10, 2, 20, 3, 30, 4, 40});
  EXPECT_EQ(global_avgpool2d_forward(x), Tensor(Shape{1, 2}, {2.5f, 25.0f}));
}

TEST(Dense, HandComputedExample) {
  Dense spec{2, 3};
  LayerParams p = make_params(spec, nullptr);
  p.get("kernel") = Tensor(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  p.get("bias") = Tensor(Shape{3}, {0.5f, -0.5f, 0});
  const Tensor y = dense_forward(Tensor(Shape{1, 2}, {1, -1}), spec, p);
  EXPECT_EQ(y, Tensor(Shape{1, 3}, {-2.5f, -3.5f, -3.0f}));
}

TEST(ReLU, ClampsNegatives) {
  EXPECT_EQ(relu(Tensor(Shape{4}, {-1, 0, 2, -0.5f})), Tensor(Shape{4}, {0, 0, 2, 0}));
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(12);
  const Tensor z = random_tensor(Shape{6, 5}, rng, -5, 5);
  const Tensor q = softmax(z);
  Tensor shifted = z;
  for (float& v : shifted.values()) v += 100.0f;
  const Tensor q2 = softmax(shifted);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      s += q[r * 5 + c];
      EXPECT_NEAR(q[r * 5 + c], q2[r * 5 + c], 1e-6);
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Softmax, HugeLogitsStayFinite) {
  const Tensor q = softmax(Tensor(Shape{1, 3}, {1000, 0, -1000}));
  EXPECT_FLOAT_EQ(q[0], 1.0f);
  EXPECT_FLOAT_EQ(q[2], 0.0f);
}

TEST(BatchNorm, TrainModeNormalisesPerChannel) {
  Rng rng(5);
  BatchNorm spec{3};
  LayerParams p = make_params(spec, nullptr);
  const Tensor x = random_tensor(Shape{4, 3, 3, 3}, rng, -3, 7);
  BatchNormCache cache;
  const Tensor y = batchnorm_apply(x, spec, p, Mode::train, &cache);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double mean = 0, sq = 0, xm = 0, xsq = 0;
    const std::size_t m = 36;
    for (std::size_t i = 0; i < m; ++i) {
      mean += y[i * 3 + ch];
      sq += double(y[i * 3 + ch]) * y[i * 3 + ch];
      xm += x[i * 3 + ch];
      xsq += double(x[i * 3 + ch]) * x[i * 3 + ch];
    }
    mean /= m;
    xm /= m;
    const double var = xsq / m - xm * xm;  // biased
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(sq / m, var / (var + 1e-3), 1e-4);
    EXPECT_NEAR(cache.batch_var[ch], var, 1e-4);
  }
}

TEST(BatchNorm, InferModeUsesMovingStatistics) {
  BatchNorm spec{1};
  LayerParams p = make_params(spec, nullptr);
  p.get("moving_mean")[0] = 2.0f;
  p.get("moving_variance")[0] = 4.0f - 1e-3f;
  p.get("gamma")[0] = 3.0f;
  p.get("beta")[0] = 1.0f;
  const Tensor y = batchnorm_apply(Tensor(Shape{2, 1}, {2, 6}), spec, p, Mode::infer);
  EXPECT_NEAR(y[0], 1.0f, 1e-6);
  EXPECT_NEAR(y[1], 7.0f, 1e-5);
}

TEST(BatchNorm, MovingStatisticsUpdate) {
  BatchNorm spec{1};
  LayerParams p = make_params(spec, nullptr);
  batchnorm_forward(Tensor(Shape{2, 1}, {1, 3}), spec, p, Mode::train);
  EXPECT_NEAR(p.get("moving_mean")[0], 0.99 * 0 + 0.01 * 2, 1e-7);
  EXPECT_NEAR(p.get("moving_variance")[0], 0.99 * 1 + 0.01 * 1, 1e-7);
  batchnorm_forward(Tensor(Shape{2, 1}, {1, 3}), spec, p, Mode::infer);
  EXPECT_NEAR(p.get("moving_mean")[0], 0.02, 1e-7);
}

TEST(BatchNorm, EmptyTrainBatchRejected) {
  BatchNorm spec{2};
  const LayerParams p = make_params(spec, nullptr);
  EXPECT_THROW(batchnorm_apply(Tensor(Shape{0, 2}), spec, p, Mode::train), InputError);
}

TEST(BatchNorm, MovingStatisticsAreNotTrainable) {
  const LayerParams p = make_params(BatchNorm{4}, nullptr);
  EXPECT_TRUE(p.find("gamma")->trainable);
  EXPECT_TRUE(p.find("beta")->trainable);
  EXPECT_FALSE(p.find("moving_mean")->trainable);
  EXPECT_FALSE(p.find("moving_variance")->trainable);
  for (float v : p.get("gamma").values()) EXPECT_EQ(v, 1.0f);
  for (float v : p.get("moving_variance").values()) EXPECT_EQ(v, 1.0f);
}

TEST(Dropout, IdentityOutsideTraining) {
  Rng rng(2);
  const Tensor x = random_tensor(Shape{3, 7}, rng);
  EXPECT_EQ(dropout_forward(x, Dropout{0.5f}, Mode::infer, 1), x);
  EXPECT_EQ(dropout_forward(x, Dropout{0.0f}, Mode::train, 1), x);
  const Tensor dropped = dropout_forward(x, Dropout{1.0f}, Mode::train, 1);
  for (float v : dropped.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Dropout, InvertedScalingAndDeterminism) {
  const Tensor x = Tensor::full(Shape{20000}, 1.0f);
  Tensor mask;
  const Tensor y = dropout_forward(x, Dropout{0.5f}, Mode::train, 99, &mask);
  double sum = 0;
  for (float v : y.values()) {
    EXPECT_TRUE(v == 0.0f || v == 2.0f);
    sum += v;
  }
  EXPECT_NEAR(sum / 20000.0, 1.0, 0.03);
  EXPECT_EQ(y, dropout_forward(x, Dropout{0.5f}, Mode::train, 99));
  EXPECT_NE(y, dropout_forward(x, Dropout{0.5f}, Mode::train, 100));
}

TEST(ResidualAdd, AddsAndChecksShape) {
  EXPECT_EQ(residual_add(Tensor(Shape{2}, {1, 2}), Tensor(Shape{2}, {3, 4})), Tensor(Shape{2}, {4, 6}));
  EXPECT_THROW(residual_add(Tensor(Shape{2}), Tensor(Shape{3})), ShapeError);
}

TEST(Flatten, CollapsesTrailingAxes) {
  EXPECT_EQ(flatten(Tensor(Shape{2, 5, 5, 3})).shape(), (Shape{2, 75}));
}

TEST(LayerSpec, ValidationRejectsNonsense) {
  EXPECT_THROW(validate(Conv2D{0, 1, 3, 3}), ConfigError);
  EXPECT_THROW(validate(Dropout{1.5f}), ConfigError);
  EXPECT_THROW(validate(BatchNorm{2, 0.0f}), ConfigError);
  EXPECT_THROW(validate(MaxPool2D{3, 3, 0}), ConfigError);
  EXPECT_NO_THROW(validate(Softmax{}));
}

TEST(LayerSpec, InitialisationBounds) {
  Rng rng(21);
  const LayerParams conv = make_params(Conv2D{8, 16, 3, 3, 1, Padding::same, true}, &rng);
  const float limit = std::sqrt(6.0f / 72.0f);
  float biggest = 0;
  for (float v : conv.get("kernel").values()) biggest = std::max(biggest, std::abs(v));
  EXPECT_LE(biggest, limit);
  EXPECT_GT(biggest, 0.9f * limit);
  for (float v : conv.get("bias").values()) EXPECT_EQ(v, 0.0f);

  const LayerParams dense = make_params(Dense{30, 10}, &rng);
  const float glorot = std::sqrt(6.0f / 40.0f);
  for (float v : dense.get("kernel").values()) EXPECT_LE(std::abs(v), glorot);
}

TEST(LayerSpec, TypeNamesAndArity) {
  EXPECT_EQ(layer_type_name(BatchNorm{1}), "BatchNormalization");
  EXPECT_EQ(layer_type_name(ResidualAdd{}), "Add");
  EXPECT_EQ(input_arity(ResidualAdd{}), 2u);
  EXPECT_EQ(input_arity(ReLU{}), 1u);
}

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "laneseg/layers.hpp"
#include "laneseg/rng.hpp"
#include "laneseg/tensor.hpp"
#include "support/gradcheck.hpp"
#include "support/reference_ops.hpp"

using namespace laneseg;
using namespace laneseg::testing;

namespace {

template <typename T>
ConvParams<T> make_conv_params(int c_out, int c_in, int k_h, int k_w, int pad_h, int pad_w,
                               Rng* rng = nullptr) {
  ConvParams<T> p;
  p.weights = Tensor<T>(c_out, c_in, k_h, k_w);
  p.bias.assign(c_out, T(0));
  p.pad_h = pad_h;
  p.pad_w = pad_w;
  if (rng) {
    for (auto& v : p.weights.data) v = static_cast<T>(rng->normal());
    for (auto& v : p.bias) v = static_cast<T>(rng->normal());
  }
  return p;
}

}  // namespace

TEST(Conv2d, IdentityKernelPreservesInput) {
  Tensor<float> x(1, 1, 3, 3);
  for (int i = 0; i < 9; ++i) x.data[i] = static_cast<float>(i + 1);
  auto p = make_conv_params<float>(1, 1, 3, 3, 1, 1);
  p.weights.at(0, 0, 1, 1) = 1.0f;
  Tensor<float> y = conv2d(x, p);
  ASSERT_TRUE(y.same_shape(x));
  for (int i = 0; i < 9; ++i) EXPECT_FLOAT_EQ(y.data[i], x.data[i]);
}

TEST(Conv2d, ImpulseWithOnesKernelGivesOnes) {
  Tensor<float> x(1, 1, 3, 3);
  x.at(0, 0, 1, 1) = 1.0f;
  auto p = make_conv_params<float>(1, 1, 3, 3, 1, 1);
  for (auto& v : p.weights.data) v = 1.0f;
  Tensor<float> y = conv2d(x, p);
  for (float v : y.data) EXPECT_FLOAT_EQ(v, 1.0f);
}

TEST(Conv2d, MatchesBruteForceReference) {
  Rng rng(7);
  Tensor<float> x(1, 2, 5, 5);
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  auto p = make_conv_params<float>(3, 2, 3, 3, 1, 1, &rng);
  Tensor<float> got = conv2d(x, p);
  Tensor<float> want = reference_conv2d(x, p);
  ASSERT_TRUE(got.same_shape(want));
  for (std::size_t i = 0; i < got.numel(); ++i) {
    EXPECT_NEAR(got.data[i], want.data[i], 1e-5f);
  }
}

TEST(Conv2d, StridedMatchesReference) {
  Rng rng(21);
  Tensor<float> x(2, 3, 6, 6);
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  auto p = make_conv_params<float>(2, 3, 2, 2, 1, 1, &rng);
  p.stride = 2;
  Tensor<float> got = conv2d(x, p);
  Tensor<float> want = reference_conv2d(x, p);
  ASSERT_TRUE(got.same_shape(want));
  for (std::size_t i = 0; i < got.numel(); ++i) {
    EXPECT_NEAR(got.data[i], want.data[i], 1e-5f);
  }
}

TEST(Conv2d, LinearInInputWithZeroBias) {
  Rng rng(11);
  Tensor<float> x(1, 2, 4, 4), y(1, 2, 4, 4);
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  for (auto& v : y.data) v = static_cast<float>(rng.normal());
  auto p = make_conv_params<float>(2, 2, 3, 3, 1, 1, &rng);
  std::fill(p.bias.begin(), p.bias.end(), 0.0f);

  Tensor<float> mix(1, 2, 4, 4);
  const float a = 1.75f, b = -0.5f;
  for (std::size_t i = 0; i < mix.numel(); ++i) mix.data[i] = a * x.data[i] + b * y.data[i];
  Tensor<float> lhs = conv2d(mix, p);
  Tensor<float> cx = conv2d(x, p), cy = conv2d(y, p);
  for (std::size_t i = 0; i < lhs.numel(); ++i) {
    EXPECT_NEAR(lhs.data[i], a * cx.data[i] + b * cy.data[i], 1e-5f);
  }
}

TEST(Conv2d, RejectsChannelMismatch) {
  Tensor<float> x(1, 2, 4, 4);
  auto p = make_conv_params<float>(1, 3, 3, 3, 1, 1);
  EXPECT_THROW(conv2d(x, p), DimensionError);
}

TEST(Conv2d, RejectsNonIntegralOutputExtent) {
  Tensor<float> x(1, 1, 5, 5);
  auto p = make_conv_params<float>(1, 1, 2, 2, 0, 0);
  p.stride = 2;  // (5 - 2) % 2 != 0
  EXPECT_THROW(conv2d(x, p), DimensionError);
}

TEST(Conv2dBackward, ZeroGradOutGivesZeroGrads) {
  Rng rng(3);
  Tensor<float> x(1, 2, 4, 4);
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  auto p = make_conv_params<float>(2, 2, 3, 3, 1, 1, &rng);
  Tensor<float> g0(1, 2, 4, 4);
  auto grads = conv2d_backward(x, p, g0);
  for (float v : grads.input.data) EXPECT_EQ(v, 0.0f);
  for (float v : grads.weights.data) EXPECT_EQ(v, 0.0f);
  for (float v : grads.bias) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2dBackward, ScalarOutputWeightGradIsInputWindow) {
  Rng rng(5);
  Tensor<float> x(1, 1, 3, 3);
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  auto p = make_conv_params<float>(1, 1, 3, 3, 0, 0, &rng);
  Tensor<float> g(1, 1, 1, 1);
  g.data[0] = 1.0f;
  auto grads = conv2d_backward(x, p, g);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_FLOAT_EQ(grads.weights.data[i], x.data[i]);
  }
  EXPECT_FLOAT_EQ(grads.bias[0], 1.0f);
}

TEST(Conv2dBackward, RejectsWrongGradShape) {
  Tensor<float> x(1, 1, 4, 4);
  auto p = make_conv_params<float>(1, 1, 3, 3, 1, 1);
  Tensor<float> bad(1, 1, 3, 3);
  EXPECT_THROW(conv2d_backward(x, p, bad), DimensionError);
}

TEST(Conv2dBackward, MatchesFiniteDifferences) {
  Rng rng(42);
  Tensor<double> x = random_tensor(1, 2, 5, 5, rng);
  auto p = make_conv_params<double>(3, 2, 3, 3, 1, 1);
  for (auto& v : p.weights.data) v = rng.normal();
  for (auto& v : p.bias) v = rng.normal();
  Tensor<double> g = random_tensor(1, 3, 5, 5, rng);

  auto loss = [&]() {
    Tensor<double> y = conv2d(x, p);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += y.data[i] * g.data[i];
    return acc;
  };
  auto grads = conv2d_backward(x, p, g);

  auto r1 = check_gradient(x.data, loss, grads.input.data, "conv input");
  EXPECT_TRUE(r1.ok) << r1.context << " worst rel " << r1.worst_rel;
  auto r2 = check_gradient(p.weights.data, loss, grads.weights.data, "conv weights");
  EXPECT_TRUE(r2.ok) << r2.context << " worst rel " << r2.worst_rel;
  auto r3 = check_gradient(p.bias, loss, grads.bias, "conv bias");
  EXPECT_TRUE(r3.ok) << r3.context << " worst rel " << r3.worst_rel;
}

TEST(MaxPool2, BasicWindow) {
  Tensor<float> x(1, 1, 2, 2);
  x.data = {1, 2, 3, 4};
  auto r = maxpool2(x);
  ASSERT_EQ(r.output.numel(), 1u);
  EXPECT_FLOAT_EQ(r.output.data[0], 4.0f);
  EXPECT_EQ(r.argmax[0], x.idx(0, 0, 1, 1));
}

TEST(MaxPool2, TiesPickFirstIndexInWindowOrder) {
  Tensor<float> x(1, 1, 4, 4, 2.5f);
  auto r = maxpool2(x);
  for (std::size_t i = 0; i < r.output.numel(); ++i) {
    EXPECT_FLOAT_EQ(r.output.data[i], 2.5f);
  }
  EXPECT_EQ(r.argmax[0], x.idx(0, 0, 0, 0));
  EXPECT_EQ(r.argmax[1], x.idx(0, 0, 0, 2));
  EXPECT_EQ(r.argmax[2], x.idx(0, 0, 2, 0));
  EXPECT_EQ(r.argmax[3], x.idx(0, 0, 2, 2));
}

TEST(MaxPool2, RejectsOddSpatialDims) {
  Tensor<float> odd_h(1, 1, 3, 4);
  EXPECT_THROW(maxpool2(odd_h), DimensionError);
  Tensor<float> odd_w(1, 1, 4, 3);
  EXPECT_THROW(maxpool2(odd_w), DimensionError);
}

TEST(MaxPool2, BackwardRoutesToArgmaxAndMatchesFiniteDifferences) {
  Rng rng(9);
  Tensor<double> x = random_tensor(1, 2, 4, 4, rng);
  separate_pool_ties(x);
  Tensor<double> g = random_tensor(1, 2, 2, 2, rng);

  auto pooled = maxpool2(x);
  Tensor<double> gx = maxpool2_backward(g, pooled.argmax, x.h, x.w);

  // all mass lands on the recorded argmax positions
  double total_in = 0.0, total_out = 0.0;
  for (double v : gx.data) total_in += v;
  for (double v : g.data) total_out += v;
  EXPECT_NEAR(total_in, total_out, 1e-12);

  auto loss = [&]() {
    auto r = maxpool2(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < r.output.numel(); ++i) acc += r.output.data[i] * g.data[i];
    return acc;
  };
  auto res = check_gradient(x.data, loss, gx.data, "maxpool input");
  EXPECT_TRUE(res.ok) << res.worst_rel;
}

TEST(Upsample2, ReplicatesBlocks) {
  Tensor<float> x(1, 1, 2, 2);
  x.data = {1, 2, 3, 4};
  Tensor<float> y = upsample_nearest2(x);
  const std::vector<float> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  ASSERT_EQ(y.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_FLOAT_EQ(y.data[i], want[i]);
}

TEST(Upsample2, ThenMaxPoolIsIdentity) {
  Rng rng(13);
  Tensor<float> x(2, 3, 5, 7);
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  auto r = maxpool2(upsample_nearest2(x));
  ASSERT_TRUE(r.output.same_shape(x));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(r.output.data[i], x.data[i]);
}

TEST(Upsample2, BackwardSumsBlocks) {
  Tensor<float> g(1, 1, 4, 4, 1.0f);
  Tensor<float> gx = upsample_nearest2_backward(g);
  ASSERT_EQ(gx.numel(), 4u);
  for (float v : gx.data) EXPECT_FLOAT_EQ(v, 4.0f);

  Rng rng(17);
  Tensor<double> x = random_tensor(1, 2, 3, 3, rng);
  Tensor<double> go = random_tensor(1, 2, 6, 6, rng);
  Tensor<double> analytic = upsample_nearest2_backward(go);
  auto loss = [&]() {
    Tensor<double> y = upsample_nearest2(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += y.data[i] * go.data[i];
    return acc;
  };
  auto res = check_gradient(x.data, loss, analytic.data, "upsample input");
  EXPECT_TRUE(res.ok) << res.worst_rel;
}

TEST(BatchNorm, NormalizesPerChannelInTraining) {
  Rng rng(23);
  Tensor<float> x(4, 3, 6, 6);
  for (auto& v : x.data) v = static_cast<float>(rng.normal() * 2.0 + 0.7);
  auto p = make_batchnorm<float>(3);
  auto r = batchnorm(x, p, /*training=*/true);
  const std::size_t plane = 36;
  for (int c = 0; c < 3; ++c) {
    double s1 = 0.0, s2 = 0.0;
    for (int n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = r.output.data[r.output.idx(n, c, 0, 0) + i];
        s1 += v;
        s2 += v * v;
      }
    }
    const double m = 4.0 * plane;
    EXPECT_LT(std::abs(s1 / m), 1e-5);
    EXPECT_NEAR(s2 / m - (s1 / m) * (s1 / m), 1.0, 1e-3);
  }
}

TEST(BatchNorm, ConstantChannelMapsToBeta) {
  Tensor<float> x(2, 2, 4, 4);
  for (int n = 0; n < 2; ++n) {
    for (std::size_t i = 0; i < 16; ++i) {
      x.data[x.idx(n, 0, 0, 0) + i] = 3.25f;
      x.data[x.idx(n, 1, 0, 0) + i] = -1.5f;
    }
  }
  auto p = make_batchnorm<float>(2, 1e-5f);
  p.beta = {5.0f, 5.0f};
  auto r = batchnorm(x, p, /*training=*/true);
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < 16; ++i) {
        EXPECT_NEAR(r.output.data[r.output.idx(n, c, 0, 0) + i], 5.0f, 1e-4f);
      }
    }
  }
}

TEST(BatchNorm, UpdatesRunningStatsWithMomentum) {
  Tensor<float> x(1, 1, 2, 2);
  x.data = {1, 2, 3, 4};  // mean 2.5, biased var 1.25
  auto p = make_batchnorm<float>(1, 1e-5f, 0.9f);
  auto r = batchnorm(x, p, /*training=*/true);
  EXPECT_NEAR(r.updated.running_mean[0], 0.9f * 0.0f + 0.1f * 2.5f, 1e-6f);
  EXPECT_NEAR(r.updated.running_var[0], 0.9f * 1.0f + 0.1f * 1.25f, 1e-6f);
  // source params untouched
  EXPECT_EQ(p.running_mean[0], 0.0f);
  EXPECT_EQ(p.running_var[0], 1.0f);
}

TEST(BatchNorm, InferenceUsesRunningStats) {
  Tensor<float> x(1, 1, 2, 2);
  x.data = {1, 2, 3, 4};
  auto p = make_batchnorm<float>(1, 1e-5f);
  p.running_mean = {2.0f};
  p.running_var = {4.0f};
  auto r = batchnorm(x, p, /*training=*/false);
  for (std::size_t i = 0; i < 4; ++i) {
    const float want = (x.data[i] - 2.0f) / std::sqrt(4.0f + 1e-5f);
    EXPECT_NEAR(r.output.data[i], want, 1e-6f);
  }
}

TEST(BatchNorm, RejectsChannelMismatch) {
  Tensor<float> x(1, 3, 2, 2);
  auto p = make_batchnorm<float>(2);
  EXPECT_THROW(batchnorm(x, p, true), DimensionError);
}

TEST(BatchNorm, BackwardMatchesFiniteDifferences) {
  Rng rng(31);
  Tensor<double> x = random_tensor(2, 2, 3, 3, rng);
  auto p = make_batchnorm<double>(2);
  for (auto& v : p.gamma) v = 0.5 + rng.unit();
  for (auto& v : p.beta) v = rng.normal();
  Tensor<double> g = random_tensor(2, 2, 3, 3, rng);

  auto loss = [&]() {
    auto r = batchnorm(x, p, /*training=*/true);
    double acc = 0.0;
    for (std::size_t i = 0; i < r.output.numel(); ++i) acc += r.output.data[i] * g.data[i];
    return acc;
  };
  auto fwd = batchnorm(x, p, true);
  auto grads = batchnorm_backward(fwd.cache, p, g);

  auto r1 = check_gradient(x.data, loss, grads.input.data, "bn input");
  EXPECT_TRUE(r1.ok) << r1.worst_rel;
  auto r2 = check_gradient(p.gamma, loss, grads.gamma, "bn gamma");
  EXPECT_TRUE(r2.ok) << r2.worst_rel;
  auto r3 = check_gradient(p.beta, loss, grads.beta, "bn beta");
  EXPECT_TRUE(r3.ok) << r3.worst_rel;
}

TEST(Relu, ClampsNegativesAndZero) {
  Tensor<float> x(1, 1, 1, 3);
  x.data = {-1.0f, 0.0f, 2.0f};
  Tensor<float> y = relu(x);
  EXPECT_FLOAT_EQ(y.data[0], 0.0f);
  EXPECT_FLOAT_EQ(y.data[1], 0.0f);
  EXPECT_FLOAT_EQ(y.data[2], 2.0f);
}

TEST(Relu, AllNegativeGivesZeroForwardAndBackward) {
  Tensor<float> x(1, 2, 2, 2, -3.0f);
  Tensor<float> y = relu(x);
  for (float v : y.data) EXPECT_EQ(v, 0.0f);
  Tensor<float> g(1, 2, 2, 2, 1.0f);
  Tensor<float> gx = relu_backward(x, g);
  for (float v : gx.data) EXPECT_EQ(v, 0.0f);
}

TEST(Relu, BackwardMatchesFiniteDifferencesAwayFromZero) {
  Rng rng(37);
  Tensor<double> x = random_tensor_margin(1, 2, 4, 4, rng);
  Tensor<double> g = random_tensor(1, 2, 4, 4, rng);
  Tensor<double> analytic = relu_backward(x, g);
  auto loss = [&]() {
    Tensor<double> y = relu(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += y.data[i] * g.data[i];
    return acc;
  };
  auto res = check_gradient(x.data, loss, analytic.data, "relu input");
  EXPECT_TRUE(res.ok) << res.worst_rel;
}

TEST(Layers, DeterministicOutputs) {
  Rng rng(41);
  Tensor<float> x(1, 2, 6, 6);
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  auto p = make_conv_params<float>(2, 2, 3, 3, 1, 1, &rng);
  Tensor<float> a = conv2d(x, p);
  Tensor<float> b = conv2d(x, p);
  EXPECT_EQ(a.data, b.data);
}

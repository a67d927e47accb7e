#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "../support/loss_oracle.hpp"
#include "trinity/error.hpp"
#include "trinity/infer/scores.hpp"

namespace nn = trinity::nn;
namespace infer = trinity::infer;

TEST(Psnr, ClosedForm) {
  // 10·log10(4 / 0.01), frozen.
  EXPECT_NEAR(infer::psnr_from_mse(0.01), 26.020599913279625, 1e-12);
  EXPECT_EQ(infer::psnr_from_mse(0.0), infer::kPsnrCeiling);
  EXPECT_EQ(infer::psnr_from_mse(1e-30), infer::kPsnrCeiling);
  const std::vector<double> p{0.1, 0.1}, t{0.0, 0.2};
  EXPECT_NEAR(infer::frame_psnr(p, t), infer::psnr_from_mse(0.01), 1e-12);
  EXPECT_THROW(infer::frame_psnr(p, std::vector<double>{0.0}), trinity::ContractViolation);
}

TEST(Psnr, MinMaxEndpointsAndDegenerateRange) {
  const auto s = infer::psnr_score(std::vector<double>{99.0, 20.0, 40.0});
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(s[1], 0.0);
  EXPECT_NEAR(s[2], 20.0 / 79.0, 1e-15);
  for (double v : infer::psnr_score(std::vector<double>{30.0, 30.0, 30.0})) EXPECT_EQ(v, 0.5);
}

TEST(GlobalScore, ZeroSimilarityGivesOneHalf) {
  auto a = nn::Tensor::from_data({1, 2}, {1, 0});
  auto b = nn::Tensor::from_data({1, 2}, {0, 1});
  EXPECT_EQ(infer::global_context_score(a, b, b, 0.07)[0], 0.5);
}

TEST(GlobalScore, SaturatesForAlignedTokens) {
  auto a = nn::Tensor::from_data({1, 2}, {1, 0});
  EXPECT_EQ(infer::global_context_score(a, a, a, 0.01)[0], 1.0);
}

TEST(GlobalScore, PerClipAndBatchIndependent) {
  std::mt19937_64 rng(1);
  const auto c = trinity::testing::unit_rows(4, 3, rng), m = trinity::testing::unit_rows(4, 3, rng),
             a = trinity::testing::unit_rows(4, 3, rng);
  const auto all = infer::global_context_score(nn::Tensor::from_data({4, 3}, c),
                                               nn::Tensor::from_data({4, 3}, m),
                                               nn::Tensor::from_data({4, 3}, a), 0.2);
  for (std::size_t i = 0; i < 4; ++i) {
    auto row = [&](const std::vector<double>& v) {
      return nn::Tensor::from_data({1, 3}, {v[3 * i], v[3 * i + 1], v[3 * i + 2]});
    };
    const double one = infer::global_context_score(row(c), row(m), row(a), 0.2)[0];
    EXPECT_EQ(one, all[i]);
    const double oracle = 0.5 * (1.0 / (1.0 + std::exp(-trinity::testing::dot(&c[3 * i], &m[3 * i], 3) / 0.2)) +
                                 1.0 / (1.0 + std::exp(-trinity::testing::dot(&c[3 * i], &a[3 * i], 3) / 0.2)));
    EXPECT_NEAR(one, oracle, 1e-14);
  }
}

TEST(LocalScore, UniformRowsClosedForm) {
  // Identical tokens everywhere: every logit equal, softmax rows uniform.
  const std::size_t l = 16;
  std::vector<double> v(l * 2);
  for (std::size_t i = 0; i < l; ++i) v[2 * i] = 1.0;
  auto h = nn::Tensor::from_data({1, l, 2}, v);
  const double n = static_cast<double>(l);
  const double expected = std::sqrt(n * ((1 - 1 / n) * (1 - 1 / n) + (n - 1) / (n * n)));
  EXPECT_NEAR(infer::local_misalignment(h, h, 0.1)[0], expected, 1e-12);
}

TEST(LocalScore, SharpIdentityIsNearZero) {
  const std::size_t l = 4;
  std::vector<double> v(l * l, 0.0);
  for (std::size_t i = 0; i < l; ++i) v[i * l + i] = 1.0;
  auto h = nn::Tensor::from_data({1, l, l}, v);
  EXPECT_LT(infer::local_misalignment(h, h, 0.01)[0], 1e-40);
}

TEST(LocalScore, NormalcyIsInverted) {
  const auto s = infer::local_normalcy(std::vector<double>{0.2, 1.0, 0.6});
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(s[1], 0.0);
  EXPECT_NEAR(s[2], 0.5, 1e-15);
}

TEST(Fusion, ArithmeticAndEndpoints) {
  const std::vector<double> r{0.9}, g{0.5};
  EXPECT_NEAR(infer::fuse(r, g, 0.3)[0], 0.62, 1e-15);
  EXPECT_EQ(infer::fuse(r, g, 1.0)[0], 0.9);
  EXPECT_THROW(infer::fuse(r, g, 1.5), trinity::ConfigError);
}

TEST(Fusion, MonotoneInEachComponent) {
  const std::vector<double> lo{0.2}, hi{0.3}, other{0.6};
  for (double a : {0.0, 0.3, 0.7, 1.0}) {
    EXPECT_LE(infer::fuse(lo, other, a)[0], infer::fuse(hi, other, a)[0]);
    EXPECT_LE(infer::fuse(other, lo, a)[0], infer::fuse(other, hi, a)[0]);
  }
}

TEST(Median, ImpulseRemovedAndConstantsKept) {
  std::vector<double> v(40, 0.25);
  v[20] = 1.0;
  for (double x : infer::median_filter(v, 17)) EXPECT_EQ(x, 0.25);
  EXPECT_THROW(infer::median_filter(v, 16), trinity::ConfigError);
}

TEST(Median, StaysWithinInputRange) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3.0, 5.0);
  std::vector<double> v(50);
  for (double& x : v) x = u(rng);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  for (double x : infer::median_filter(v, 7)) {
    EXPECT_GE(x, *lo);
    EXPECT_LE(x, *hi);
  }
  // Edge replication, kernel 3 on a ramp is the identity.
  const std::vector<double> ramp{1, 2, 3, 4};
  EXPECT_EQ(infer::median_filter(ramp, 3), ramp);
}

TEST(ClipToFrames, FrameInheritsClipEndingAtIt) {
  const std::vector<double> clips{0.1, 0.2, 0.3};
  const auto f = infer::clip_to_frames(clips, 4);
  EXPECT_EQ(f, (std::vector<double>{0.1, 0.1, 0.1, 0.1, 0.2, 0.3}));
}

TEST(Timeline, AnomalyIsOneMinusNormalcy) {
  const auto tl = infer::fuse_and_smooth({0.0, 1.0, 0.5}, {0.5, 0.5, 0.5}, 1.0, 1, {0, 1, 0});
  ASSERT_EQ(tl.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(tl.anomaly[i], 1.0 - tl.normalcy[i]);
  EXPECT_EQ(tl.normalcy, (std::vector<double>{0.0, 1.0, 0.5}));
  EXPECT_THROW(infer::fuse_and_smooth({0.0}, {0.0}, 0.5, 1, {0, 1}), trinity::ContractViolation);
}

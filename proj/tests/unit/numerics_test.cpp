#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "../support/gradcheck.hpp"
#include "trinity/binary_io.hpp"
#include "trinity/error.hpp"
#include "trinity/numerics/checkpoint.hpp"
#include "trinity/numerics/layers.hpp"
#include "trinity/numerics/optim.hpp"
#include "trinity/numerics/tensor.hpp"

namespace nn = trinity::nn;
using trinity::testing::grad_check;
using trinity::testing::random_tensor;
using trinity::testing::weighted_sum;

namespace {

// erf by its Maclaurin series in long double; independent of std::erf.
long double erf_series(long double x) {
  long double sum = 0.0L, term = x;
  for (int n = 0; n < 80; ++n) {
    sum += term / (2 * n + 1);
    term *= -x * x / (n + 1);
  }
  return 2.0L / std::sqrt(std::numbers::pi_v<long double>) * sum;
}

}  // namespace

TEST(Ops, SoftmaxOfUniformLogitsIsUniform) {
  auto y = nn::softmax(nn::Tensor::zeros({3}));
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Ops, MatmulByIdentity) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({3, 4}, rng);
  auto eye = nn::Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto out = nn::matmul(eye, a);
  ASSERT_EQ(out.shape(), a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(out.data()[i], a.data()[i]);
}

TEST(Ops, GeluMatchesSeriesOracle) {
  for (double x : {1.0, -0.7, 2.3}) {
    const long double oracle =
        0.5L * x * (1.0L + erf_series(x / std::sqrt(2.0L)));
    EXPECT_NEAR(nn::gelu(nn::Tensor::scalar(x)).item(), static_cast<double>(oracle), 1e-15);
  }
  // Frozen from the series oracle.
  EXPECT_NEAR(nn::gelu(nn::Tensor::scalar(1.0)).item(), 0.8413447460685429, 1e-15);
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
  auto a = nn::Tensor::zeros({2, 3});
  auto b = nn::Tensor::zeros({4, 5});
  try {
    nn::matmul(a, b);
    FAIL() << "expected ContractViolation";
  } catch (const trinity::ContractViolation& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos);
    EXPECT_NE(msg.find("[4, 5]"), std::string::npos);
  }
  EXPECT_THROW(nn::add(nn::Tensor::zeros({2, 3}), nn::Tensor::zeros({3, 2})),
               trinity::ContractViolation);
}

TEST(Ops, SoftmaxRowsAreDistributions) {
  std::mt19937_64 rng(3);
  auto y = nn::softmax(random_tensor({5, 7}, rng, 4.0));
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      const double v = y.data()[r * 7 + c];
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Ops, LayerNormStandardizes) {
  std::mt19937_64 rng(4);
  auto x = nn::add_scalar(random_tensor({6, 16}, rng, 3.0), 5.0);
  auto y = nn::layer_norm(x, nn::Tensor::full({16}, 1.0), nn::Tensor::zeros({16}), 0.0);
  for (std::size_t r = 0; r < 6; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 16; ++c) mu += y.data()[r * 16 + c];
    mu /= 16;
    for (std::size_t c = 0; c < 16; ++c) {
      var += (y.data()[r * 16 + c] - mu) * (y.data()[r * 16 + c] - mu);
    }
    EXPECT_LT(std::abs(mu), 1e-10);
    EXPECT_NEAR(var / 16, 1.0, 1e-6);
  }
}

TEST(Backward, SumOfSquares) {
  auto x = nn::Tensor::from_data({2}, {1.0, 2.0}, true);
  nn::backward(nn::sum(nn::square(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(Backward, ConstantLossGivesZeroGradients) {
  auto x = nn::Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  auto c = nn::Tensor::scalar(5.0);
  nn::backward(nn::add(c, nn::Tensor::scalar(1.0)));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, UnreachableLeafStaysZero) {
  auto x = nn::Tensor::from_data({2}, {1.0, 2.0}, true);
  auto unused = nn::Tensor::from_data({2}, {3.0, 4.0}, true);
  nn::backward(nn::sum(x));
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  auto x = nn::Tensor::from_data({2}, {1.0, 2.0}, true);
  EXPECT_THROW(nn::backward(x), trinity::ContractViolation);
}

TEST(Backward, DetachBlocksGradient) {
  auto x = nn::Tensor::from_data({2}, {1.0, 2.0}, true);
  nn::backward(nn::add(nn::sum(x.detach()), nn::sum(nn::scale(x, 0.0))));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

// Every differentiable op against central differences.
class OpGradients : public ::testing::Test {
 protected:
  std::mt19937_64 rng{11};
  void expect_ok(std::vector<nn::Tensor> in,
                 const std::function<nn::Tensor(const std::vector<nn::Tensor>&)>& f) {
    auto r = grad_check(std::move(in), f);
    EXPECT_LT(r.max_rel_error, 1e-4);
    EXPECT_GT(r.checked, 0u);
  }
};

TEST_F(OpGradients, Elementwise) {
  expect_ok({random_tensor({3, 4}, rng), random_tensor({4}, rng)},
            [](auto& v) { return weighted_sum(nn::add(v[0], v[1])); });
  expect_ok({random_tensor({3, 4}, rng), random_tensor({3, 1}, rng)},
            [](auto& v) { return weighted_sum(nn::sub(v[0], v[1])); });
  expect_ok({random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
            [](auto& v) { return weighted_sum(nn::mul(v[0], v[1])); });
  expect_ok({random_tensor({2, 3}, rng), nn::add_scalar(nn::square(random_tensor({3}, rng)), 0.5)},
            [](auto& v) { return weighted_sum(nn::div(v[0], v[1])); });
  expect_ok({random_tensor({5}, rng)}, [](auto& v) { return weighted_sum(nn::exp(v[0])); });
  expect_ok({nn::add_scalar(nn::square(random_tensor({5}, rng)), 0.3)},
            [](auto& v) { return weighted_sum(nn::log(v[0])); });
  expect_ok({random_tensor({6}, rng)}, [](auto& v) { return weighted_sum(nn::gelu(v[0])); });
  expect_ok({random_tensor({6}, rng)}, [](auto& v) { return weighted_sum(nn::relu(v[0])); });
  expect_ok({random_tensor({6}, rng)}, [](auto& v) { return weighted_sum(nn::sigmoid(v[0])); });
  expect_ok({random_tensor({6}, rng)}, [](auto& v) { return weighted_sum(nn::tanh(v[0])); });
  expect_ok({random_tensor({6}, rng)}, [](auto& v) { return nn::mean(nn::square(v[0])); });
}

TEST_F(OpGradients, Normalizations) {
  expect_ok({random_tensor({3, 5}, rng, 2.0)},
            [](auto& v) { return weighted_sum(nn::softmax(v[0])); });
  expect_ok({random_tensor({3, 5}, rng, 2.0)},
            [](auto& v) { return weighted_sum(nn::log_softmax(v[0])); });
  expect_ok({random_tensor({4, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)},
            [](auto& v) { return weighted_sum(nn::layer_norm(v[0], v[1], v[2])); });
  expect_ok({random_tensor({4, 6}, rng)},
            [](auto& v) { return weighted_sum(nn::l2_normalize(v[0])); });
}

TEST_F(OpGradients, Contractions) {
  expect_ok({random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng)},
            [](auto& v) { return weighted_sum(nn::matmul(v[0], v[1])); });
  expect_ok({random_tensor({2, 3, 4}, rng), random_tensor({2, 4, 2}, rng)},
            [](auto& v) { return weighted_sum(nn::matmul(v[0], v[1])); });
  expect_ok({random_tensor({2, 2, 6, 6}, rng), random_tensor({3, 2, 3, 3}, rng),
             random_tensor({3}, rng)},
            [](auto& v) { return weighted_sum(nn::conv2d(v[0], v[1], v[2], 1, 1)); });
  expect_ok({random_tensor({1, 2, 8, 8}, rng), random_tensor({3, 2, 2, 2}, rng),
             random_tensor({3}, rng)},
            [](auto& v) { return weighted_sum(nn::conv2d(v[0], v[1], v[2], 2, 0)); });
  expect_ok({random_tensor({2, 2, 4, 4}, rng)},
            [](auto& v) { return weighted_sum(nn::max_pool2d(v[0], 2)); });
  expect_ok({random_tensor({1, 2, 3, 3}, rng)},
            [](auto& v) { return weighted_sum(nn::upsample_nearest2d(v[0], 2)); });
}

TEST_F(OpGradients, Layout) {
  expect_ok({random_tensor({2, 3, 4}, rng)},
            [](auto& v) { return weighted_sum(nn::permute(v[0], {2, 0, 1})); });
  expect_ok({random_tensor({2, 3, 4}, rng)},
            [](auto& v) { return weighted_sum(nn::reshape(v[0], {6, 4})); });
  expect_ok({random_tensor({2, 3}, rng), random_tensor({2, 2}, rng)},
            [](auto& v) { return weighted_sum(nn::concat({v[0], v[1]}, 1)); });
  expect_ok({random_tensor({3, 5, 2}, rng)},
            [](auto& v) { return weighted_sum(nn::slice(v[0], 1, 1, 3)); });
  expect_ok({random_tensor({2, 4, 4}, rng)},
            [](auto& v) { return weighted_sum(nn::diagonal(v[0])); });
  expect_ok({random_tensor({5, 3}, rng)}, [](auto& v) {
    return weighted_sum(nn::embedding(v[0], {4, 0, 4, 2}, {2, 2}));
  });
}

TEST_F(OpGradients, CompositeGraph) {
  for (int trial = 0; trial < 5; ++trial) {
    expect_ok({random_tensor({3, 4}, rng), random_tensor({4, 4}, rng), random_tensor({4}, rng)},
              [](auto& v) {
                auto h = nn::gelu(nn::add(nn::matmul(v[0], v[1]), v[2]));
                auto p = nn::log_softmax(nn::l2_normalize(h));
                return nn::neg(nn::mean(p));
              });
  }
}

TEST(Attention, SingleKeyIsDegenerate) {
  nn::ParameterStore store(5);
  nn::MultiHeadAttention mha(store, "mha", 8, 2);
  std::mt19937_64 rng(6);
  auto kv = random_tensor({1, 1, 8}, rng);
  auto q1 = random_tensor({1, 3, 8}, rng);
  auto q2 = random_tensor({1, 3, 8}, rng);
  auto o1 = mha(q1, kv, kv);
  auto o2 = mha(q2, kv, kv);
  // Every query receives W_proj(W_V v).
  auto expected = mha.w_proj(mha.w_v(kv));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t d = 0; d < 8; ++d) {
      EXPECT_NEAR(o1.data()[i * 8 + d], expected.data()[d], 1e-12);
      EXPECT_NEAR(o2.data()[i * 8 + d], expected.data()[d], 1e-12);
    }
  }
}

TEST(Attention, HandComputedTwoTokens) {
  nn::ParameterStore store(0);
  nn::MultiHeadAttention mha(store, "mha", 2, 1);
  for (auto* lin : {&mha.w_q, &mha.w_k, &mha.w_v, &mha.w_proj}) {
    auto w = lin->weight.mutable_data();
    w[0] = 1; w[1] = 0; w[2] = 0; w[3] = 1;
  }
  auto q = nn::Tensor::from_data({1, 1, 2}, {1.0, 0.0});
  auto kv = nn::Tensor::from_data({1, 2, 2}, {1.0, 0.0, 0.0, 1.0});
  nn::Tensor weights;
  auto out = mha(q, kv, kv, &weights);
  // logits = [1, 0] / sqrt(2)
  const double e = std::exp(1.0 / std::sqrt(2.0));
  const double a0 = e / (e + 1.0);
  EXPECT_NEAR(weights.data()[0], a0, 1e-14);
  EXPECT_NEAR(out.data()[0], a0, 1e-14);
  EXPECT_NEAR(out.data()[1], 1.0 - a0, 1e-14);
}

TEST(Attention, RowsSumToOneAndHeadsMustDivide) {
  nn::ParameterStore store(2);
  nn::MultiHeadAttention mha(store, "mha", 16, 8);
  std::mt19937_64 rng(8);
  nn::Tensor w;
  mha(random_tensor({2, 5, 16}, rng), random_tensor({2, 7, 16}, rng),
      random_tensor({2, 7, 16}, rng), &w);
  ASSERT_EQ(w.shape(), (nn::Shape{2, 8, 5, 7}));
  for (std::size_t r = 0; r < 2 * 8 * 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) s += w.data()[r * 7 + c];
    EXPECT_NEAR(s, 1.0, 1e-10);
  }
  EXPECT_THROW(nn::MultiHeadAttention(store, "bad", 12, 8), trinity::ConfigError);
}

TEST(Attention, GradientsMatchFiniteDifferences) {
  nn::ParameterStore store(3);
  nn::TransformerBlock block(store, "blk", 8, 2, 16);
  std::mt19937_64 rng(9);
  std::vector<nn::Tensor> inputs{random_tensor({2, 3, 8}, rng)};
  for (const auto& [name, t] : store.entries()) {
    // Non-trivial values everywhere so every path carries gradient.
    auto d = t.clone();
    std::normal_distribution<double> dist(0.0, 0.3);
    for (double& v : d.mutable_data()) v += dist(rng);
    inputs.push_back(d);
  }
  auto r = grad_check(inputs, [&](const std::vector<nn::Tensor>& v) {
    nn::TransformerBlock b = block;
    // Rebind parameters by registration order.
    const auto& entries = store.entries();
    auto find = [&](const std::string& n) {
      for (std::size_t k = 0; k < entries.size(); ++k) {
        if (entries[k].first == n) return v[k + 1];
      }
      throw std::runtime_error(n);
    };
    b.norm1.gamma = find("blk.norm1.gamma");
    b.norm1.beta = find("blk.norm1.beta");
    b.norm2.gamma = find("blk.norm2.gamma");
    b.norm2.beta = find("blk.norm2.beta");
    b.attention.w_q.weight = find("blk.attn.w_q.weight");
    b.attention.w_q.bias = find("blk.attn.w_q.bias");
    b.attention.w_k.weight = find("blk.attn.w_k.weight");
    b.attention.w_k.bias = find("blk.attn.w_k.bias");
    b.attention.w_v.weight = find("blk.attn.w_v.weight");
    b.attention.w_v.bias = find("blk.attn.w_v.bias");
    b.attention.w_proj.weight = find("blk.attn.w_proj.weight");
    b.attention.w_proj.bias = find("blk.attn.w_proj.bias");
    b.mlp.up.weight = find("blk.mlp.up.weight");
    b.mlp.up.bias = find("blk.mlp.up.bias");
    b.mlp.down.weight = find("blk.mlp.down.weight");
    b.mlp.down.bias = find("blk.mlp.down.bias");
    return weighted_sum(b(v[0]));
  });
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Optim, CosineScheduleEndpointsAndMonotone) {
  nn::CosineSchedule s{2e-4, 1e-6, 100};
  EXPECT_DOUBLE_EQ(s.rate(0), 2e-4);
  EXPECT_DOUBLE_EQ(s.rate(100), 1e-6);
  for (std::uint64_t t = 1; t <= 120; ++t) EXPECT_LE(s.rate(t), s.rate(t - 1));
}

TEST(Optim, AdamConvergesOnQuadratic) {
  // Closed-form minimum of (w - 3)^2 is w = 3.
  auto w = nn::Tensor::from_data({1}, {-2.0}, true);
  nn::Adam adam({w}, nn::CosineSchedule{0.1, 0.0, 1000});
  for (int i = 0; i < 1000; ++i) {
    nn::backward(nn::sum(nn::square(nn::add_scalar(w, -3.0))));
    adam.step();
  }
  EXPECT_NEAR(w.data()[0], 3.0, 1e-3);
}

TEST(Optim, StepWithoutBackwardIsStale) {
  auto w = nn::Tensor::from_data({1}, {0.0}, true);
  nn::Adam adam({w}, nn::CosineSchedule{0.1, 0.0, 10});
  EXPECT_THROW(adam.step(), trinity::ContractViolation);
  nn::backward(nn::sum(nn::square(w)));
  EXPECT_NO_THROW(adam.step());
  EXPECT_THROW(adam.step(), trinity::ContractViolation);
}

TEST(Optim, MomentsMirrorParameterShapes) {
  nn::ParameterStore store(1);
  nn::Linear lin(store, "lin", 3, 4);
  nn::Adam adam(store, nn::CosineSchedule{});
  ASSERT_EQ(adam.parameters().size(), store.entries().size());
  for (std::size_t i = 0; i < adam.parameters().size(); ++i) {
    EXPECT_EQ(adam.first_moments()[i].size(), adam.parameters()[i].numel());
    EXPECT_EQ(adam.second_moments()[i].size(), adam.parameters()[i].numel());
  }
}

TEST(Parameters, RegisteredOnce) {
  nn::ParameterStore store(1);
  nn::Linear lin(store, "lin", 2, 2);
  EXPECT_THROW(nn::Linear(store, "lin", 2, 2), trinity::ConfigError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  nn::ParameterStore store(42);
  nn::Linear lin(store, "a", 3, 5);
  nn::LayerNorm ln(store, "b", 5);
  store.get("a.bias").mutable_data()[2] = -0.0;
  store.get("b.gamma").mutable_data()[1] = std::nextafter(1.0, 2.0);
  auto path = std::filesystem::temp_directory_path() / "trinity_ckpt_test.bin";
  nn::save_checkpoint(path, store);
  const std::string first = trinity::io::read_file(path);

  nn::ParameterStore other(7);
  nn::Linear lin2(other, "a", 3, 5);
  nn::LayerNorm ln2(other, "b", 5);
  nn::load_checkpoint(path, other);
  for (std::size_t i = 0; i < store.entries().size(); ++i) {
    auto x = store.entries()[i].second.data();
    auto y = other.entries()[i].second.data();
    ASSERT_EQ(0, std::memcmp(x.data(), y.data(), x.size_bytes()));
  }
  nn::save_checkpoint(path, other);
  EXPECT_EQ(first, trinity::io::read_file(path));
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptHeaderRejected) {
  std::vector<nn::NamedTensor> records{{"x", {2}, {1.0, 2.0}}};
  std::string bytes = nn::encode_checkpoint(records);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(nn::decode_checkpoint(bad, "bad"), trinity::FormatError);
  EXPECT_THROW(nn::decode_checkpoint(bytes.substr(0, bytes.size() - 3), "short"),
               trinity::FormatError);
  std::string wrong_version = bytes;
  wrong_version[8] = 9;
  EXPECT_THROW(nn::decode_checkpoint(wrong_version, "ver"), trinity::FormatError);
}

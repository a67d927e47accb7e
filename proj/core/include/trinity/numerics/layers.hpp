#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "trinity/numerics/tensor.hpp"

namespace trinity::nn {

enum class Init {
  kTruncNormal,  // std 0.02, truncated at 2 std
  kHe,           // N(0, 2 / fan_in), for ReLU convolutions
  kZeros,
  kOnes,
};

/// Owns every learnable tensor of a model under a unique dotted name.
/// Registration order is stable and defines checkpoint order.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor create(const std::string& name, Shape shape, Init init,
                std::size_t fan_in = 0);
  /// Registers a tensor with explicit initial values.
  Tensor create_from(const std::string& name, Shape shape,
                     std::vector<double> values);

  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::mt19937_64 rng_;
  std::vector<std::pair<std::string, Tensor>> entries_;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in,
         std::size_t out, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t width);
  Tensor operator()(const Tensor& x) const;
};

struct Conv2d {
  Tensor weight;  // [cout, cin, k, k]
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, std::size_t cin,
         std::size_t cout, std::size_t kernel, std::size_t stride,
         std::size_t padding, Init init = Init::kHe);
  Tensor operator()(const Tensor& x) const;
};

/// Multi-head cross attention,
///   out = W_proj · concat_h softmax(Q_h K_hᵀ / sqrt(d_head)) V_h,
/// with Q = W_Q·query, K = W_K·key, V = W_V·value.
struct MultiHeadAttention {
  Linear w_q, w_k, w_v, w_proj;
  std::size_t heads = 1;
  std::size_t width = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name,
                     std::size_t width, std::size_t heads);

  /// query: [B, Lq, width]; key/value: [B, Lk, width]. When `weights` is
  /// non-null it receives the attention probabilities [B, heads, Lq, Lk].
  Tensor operator()(const Tensor& query, const Tensor& key, const Tensor& value,
                    Tensor* weights = nullptr) const;
};

/// Functional form of `MultiHeadAttention::operator()`.
Tensor multi_head_cross_attention(const Tensor& query, const Tensor& key,
                                  const Tensor& value,
                                  const MultiHeadAttention& params,
                                  std::size_t heads, Tensor* weights = nullptr);

struct FeedForward {
  Linear up, down;

  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, std::size_t width,
              std::size_t hidden);
  Tensor operator()(const Tensor& x) const;
};

/// Pre-norm self-attention transformer block.
struct TransformerBlock {
  LayerNorm norm1, norm2;
  MultiHeadAttention attention;
  FeedForward mlp;

  TransformerBlock() = default;
  TransformerBlock(ParameterStore& store, const std::string& name,
                   std::size_t width, std::size_t heads, std::size_t hidden);
  Tensor operator()(const Tensor& x, Tensor* weights = nullptr) const;
};

}  // namespace trinity::nn

#include "trinity/numerics/layers.hpp"

#include <cmath>

#include "trinity/error.hpp"

namespace trinity::nn {

Tensor ParameterStore::create(const std::string& name, Shape shape, Init init,
                              std::size_t fan_in) {
  std::vector<double> values(shape_numel(shape));
  switch (init) {
    case Init::kTruncNormal: {
      std::normal_distribution<double> dist(0.0, 0.02);
      for (double& v : values) {
        do {
          v = dist(rng_);
        } while (std::abs(v) > 0.04);
      }
      break;
    }
    case Init::kHe: {
      if (fan_in == 0) throw ConfigError("He init for '" + name + "' needs fan_in");
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (double& v : values) v = dist(rng_);
      break;
    }
    case Init::kZeros:
      break;
    case Init::kOnes:
      std::fill(values.begin(), values.end(), 1.0);
      break;
  }
  return create_from(name, std::move(shape), std::move(values));
}

Tensor ParameterStore::create_from(const std::string& name, Shape shape,
                                   std::vector<double> values) {
  if (contains(name)) {
    throw ConfigError("parameter '" + name + "' registered twice");
  }
  Tensor t = Tensor::from_data(std::move(shape), std::move(values), true);
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParameterStore::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ConfigError("unknown parameter '" + name + "'");
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return true;
  }
  return false;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [n, t] : entries_) total += t.numel();
  return total;
}

void ParameterStore::zero_grad() {
  for (auto& [n, t] : entries_) t.zero_grad();
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in,
               std::size_t out, bool with_bias)
    : weight(store.create(name + ".weight", {in, out}, Init::kTruncNormal)) {
  if (with_bias) bias = store.create(name + ".bias", {out}, Init::kZeros);
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name,
                     std::size_t width)
    : gamma(store.create(name + ".gamma", {width}, Init::kOnes)),
      beta(store.create(name + ".beta", {width}, Init::kZeros)) {}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return layer_norm(x, gamma, beta);
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, std::size_t cin,
               std::size_t cout, std::size_t kernel, std::size_t stride_,
               std::size_t padding_, Init init)
    : weight(store.create(name + ".weight", {cout, cin, kernel, kernel}, init,
                          cin * kernel * kernel)),
      bias(store.create(name + ".bias", {cout}, Init::kZeros)),
      stride(stride_),
      padding(padding_) {}

Tensor Conv2d::operator()(const Tensor& x) const {
  return conv2d(x, weight, bias, stride, padding);
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store,
                                       const std::string& name,
                                       std::size_t width_, std::size_t heads_)
    : heads(heads_), width(width_) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention '" + name + "': " + std::to_string(heads) +
                      " heads do not divide width " + std::to_string(width));
  }
  w_q = Linear(store, name + ".w_q", width, width);
  w_k = Linear(store, name + ".w_k", width, width);
  w_v = Linear(store, name + ".w_v", width, width);
  w_proj = Linear(store, name + ".w_proj", width, width);
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& key,
                                      const Tensor& value,
                                      Tensor* weights) const {
  return multi_head_cross_attention(query, key, value, *this, heads, weights);
}

Tensor multi_head_cross_attention(const Tensor& query, const Tensor& key,
                                  const Tensor& value,
                                  const MultiHeadAttention& params,
                                  std::size_t heads, Tensor* weights) {
  if (heads == 0 || params.width % heads != 0) {
    throw ConfigError("attention: " + std::to_string(heads) +
                      " heads do not divide width " +
                      std::to_string(params.width));
  }
  if (query.rank() != 3 || key.rank() != 3 || value.rank() != 3) {
    throw ContractViolation("attention: expects [B, L, width] operands");
  }
  if (query.dim(-1) != params.width || key.dim(-1) != params.width ||
      value.dim(-1) != params.width) {
    throw ContractViolation("attention: embedding width mismatch, query " +
                            shape_str(query.shape()) + " key " +
                            shape_str(key.shape()));
  }
  if (key.shape() != value.shape() || key.dim(0) != query.dim(0)) {
    throw ContractViolation("attention: key " + shape_str(key.shape()) +
                            " and value " + shape_str(value.shape()) +
                            " incompatible with query " +
                            shape_str(query.shape()));
  }
  const std::size_t b = query.dim(0);
  const std::size_t lq = query.dim(1);
  const std::size_t lk = key.dim(1);
  const std::size_t dh = params.width / heads;

  auto split = [&](const Tensor& t, std::size_t len) {
    return permute(reshape(t, {b, len, heads, dh}), {0, 2, 1, 3});
  };
  Tensor q = split(params.w_q(query), lq);
  Tensor k = split(params.w_k(key), lk);
  Tensor v = split(params.w_v(value), lk);
  Tensor logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor attn = softmax(logits);
  if (weights) *weights = attn;
  Tensor mixed = matmul(attn, v);  // [B, H, Lq, dh]
  Tensor merged = reshape(permute(mixed, {0, 2, 1, 3}), {b, lq, params.width});
  return params.w_proj(merged);
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name,
                         std::size_t width, std::size_t hidden)
    : up(store, name + ".up", width, hidden),
      down(store, name + ".down", hidden, width) {}

Tensor FeedForward::operator()(const Tensor& x) const {
  return down(gelu(up(x)));
}

TransformerBlock::TransformerBlock(ParameterStore& store,
                                   const std::string& name, std::size_t width,
                                   std::size_t heads, std::size_t hidden)
    : norm1(store, name + ".norm1", width),
      norm2(store, name + ".norm2", width),
      attention(store, name + ".attn", width, heads),
      mlp(store, name + ".mlp", width, hidden) {}

Tensor TransformerBlock::operator()(const Tensor& x, Tensor* weights) const {
  Tensor h = norm1(x);
  Tensor y = add(x, attention(h, h, h, weights));
  return add(y, mlp(norm2(y)));
}

}  // namespace trinity::nn

#pragma once

#include <cstdint>
#include <vector>

#include "trinity/model/config.hpp"
#include "trinity/numerics/layers.hpp"

namespace trinity::model {

/// Motion tokens for a batch. With VQ on, `q` and `err` hold one codeword
/// index per patch, row-major per sample (B·(N−1) entries each). With VQ
/// off, `hof` holds raw patch features [B, N−1, 25].
struct MotionInput {
  std::vector<std::size_t> q;
  std::vector<std::size_t> err;
  nn::Tensor hof;
};

struct Batch {
  nn::Tensor frames;   // [B, T, H, W], values in [-1, 1]
  nn::Tensor context;  // [B, Y]
  MotionInput motion;

  std::size_t size() const { return frames.defined() ? frames.dim(0) : 0; }
};

struct AppearanceOutput {
  nn::Tensor h;           // [B, N, D]
  nn::Tensor prediction;  // [B, 1, H, W]
  nn::Tensor recon_loss;  // scalar MSE against frame T
  nn::Tensor bottleneck;  // [B, C, H/8, W/8], still attached to the encoder
};

struct ForwardOutput {
  nn::Tensor h_cxt;  // undefined in context-free mode
  nn::Tensor h_mot;
  nn::Tensor h_app;
  nn::Tensor prediction;
  nn::Tensor recon_loss;
  nn::Tensor context_attention;  // last TSCAB block, [B, heads, N, N]
};

/// Context MLP, TSCAB cross-attention over the learnable positional
/// embedding P^s, and the output projection.
struct ContextBranch {
  nn::Linear in1, in2, out;
  nn::LayerNorm norm1, norm2;
  nn::Tensor positions;  // P^s [N, d_p]
  struct Block {
    nn::LayerNorm query_norm, memory_norm, ffn_norm;
    nn::MultiHeadAttention attention;
    nn::FeedForward ffn;
  };
  std::vector<Block> blocks;
  nn::Linear projection;

  ContextBranch() = default;
  ContextBranch(nn::ParameterStore& store, const ModelConfig& config);
  /// context: [B, Y] -> [B, N, D], tokens L2-normalized.
  nn::Tensor operator()(const nn::Tensor& context, nn::Tensor* attention = nullptr) const;
  /// P^t: [B, d_t]
  nn::Tensor embed(const nn::Tensor& context) const;
};

struct MotionBranch {
  nn::Tensor table;  // shared word embedding [M, D]
  nn::Linear pair;   // [2D -> D]
  nn::Linear raw;    // [25 -> D], VQ off
  nn::LayerNorm token_norm;
  nn::Tensor head;   // [1, 1, D]
  nn::Tensor positions;
  std::vector<nn::TransformerBlock> blocks;
  nn::LayerNorm final_norm;
  nn::Linear projection;
  bool use_vq = true;
  std::size_t words = 0;

  MotionBranch() = default;
  MotionBranch(nn::ParameterStore& store, const ModelConfig& config);
  nn::Tensor operator()(const MotionInput& input, std::size_t batch) const;
};

struct UNet {
  nn::Conv2d enc1, enc2, enc3, bottleneck, dec3, dec2, dec1, head;

  UNet() = default;
  UNet(nn::ParameterStore& store, const ModelConfig& config);
  /// Returns {prediction [B,1,H,W], bottleneck features}.
  std::pair<nn::Tensor, nn::Tensor> operator()(const nn::Tensor& inputs) const;
};

struct AppearanceBranch {
  UNet unet;
  nn::Conv2d tokenizer;
  nn::Tensor head;
  nn::Tensor positions;
  std::vector<nn::TransformerBlock> blocks;
  nn::LayerNorm final_norm;
  nn::Linear projection;

  AppearanceBranch() = default;
  AppearanceBranch(nn::ParameterStore& store, const ModelConfig& config);
  AppearanceOutput operator()(const nn::Tensor& frames) const;
};

class TrinityModel {
 public:
  explicit TrinityModel(ModelConfig config, std::uint64_t seed = 0);
  TrinityModel(const TrinityModel&) = delete;
  TrinityModel& operator=(const TrinityModel&) = delete;

  ForwardOutput forward(const Batch& batch) const;

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }

  /// τ = exp(log τ); the same τ serves every alignment term.
  nn::Tensor temperature() const { return nn::exp(log_temperature_); }
  double temperature_value() const;
  const nn::Tensor& log_temperature() const { return log_temperature_; }

  const ContextBranch& context_branch() const { return context_; }
  const MotionBranch& motion_branch() const { return motion_; }
  const AppearanceBranch& appearance_branch() const { return appearance_; }

 private:
  ModelConfig config_;
  nn::ParameterStore store_;
  nn::Tensor log_temperature_;
  ContextBranch context_;
  MotionBranch motion_;
  AppearanceBranch appearance_;
};

/// Checks frame shape and the [-1, 1] value domain.
void check_frames(const nn::Tensor& frames, const ModelConfig& config);

}  // namespace trinity::model

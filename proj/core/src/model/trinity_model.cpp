#include "trinity/model/trinity_model.hpp"

#include <cmath>

#include "trinity/error.hpp"
#include "trinity/flow/flow.hpp"

namespace trinity::model {

namespace {

// [L, W] parameter or [1, 1, W] token broadcast to [B, L, W].
nn::Tensor broadcast_rows(const nn::Tensor& t, std::size_t batch) {
  const std::size_t len = t.rank() == 2 ? t.dim(0) : t.dim(1);
  const std::size_t width = t.dim(-1);
  return nn::add(nn::Tensor::zeros({batch, len, width}),
                 nn::reshape(t, {1, len, width}));
}

// Prepend the head token, add positions, run the blocks, project, normalize.
nn::Tensor encode_tokens(const nn::Tensor& local, const nn::Tensor& head,
                         const nn::Tensor& positions,
                         const std::vector<nn::TransformerBlock>& blocks,
                         const nn::LayerNorm& norm, const nn::Linear& projection) {
  const std::size_t b = local.dim(0);
  nn::Tensor x = nn::concat({broadcast_rows(head, b), local}, 1);
  x = nn::add(x, positions);
  for (const auto& block : blocks) x = block(x);
  return nn::l2_normalize(projection(norm(x)));
}

}  // namespace

void check_frames(const nn::Tensor& frames, const ModelConfig& config) {
  if (frames.rank() != 4 || frames.dim(1) != config.frames ||
      frames.dim(2) != config.image_height || frames.dim(3) != config.image_width) {
    throw ContractViolation("frames " + nn::shape_str(frames.shape()) + " do not match [B, " +
                            std::to_string(config.frames) + ", " +
                            std::to_string(config.image_height) + ", " +
                            std::to_string(config.image_width) + "]");
  }
  for (double v : frames.data()) {
    if (!(v >= -1.0 && v <= 1.0)) {
      throw ContractViolation("frame value " + std::to_string(v) + " outside [-1, 1]");
    }
  }
}

ContextBranch::ContextBranch(nn::ParameterStore& store, const ModelConfig& c) {
  const std::size_t y = c.context.dimension();
  in1 = nn::Linear(store, "cxt.mlp.fc1", y, c.context_dim);
  norm1 = nn::LayerNorm(store, "cxt.mlp.norm1", c.context_dim);
  in2 = nn::Linear(store, "cxt.mlp.fc2", c.context_dim, c.context_dim);
  norm2 = nn::LayerNorm(store, "cxt.mlp.norm2", c.context_dim);
  out = nn::Linear(store, "cxt.mlp.fc3", c.context_dim, c.context_dim);
  positions = store.create("cxt.positions", {c.tokens(), c.position_dim},
                           nn::Init::kTruncNormal);
  for (std::size_t i = 0; i < c.tscab_blocks; ++i) {
    const std::string p = "cxt.tscab" + std::to_string(i);
    Block blk;
    blk.query_norm = nn::LayerNorm(store, p + ".query_norm", c.position_dim);
    blk.memory_norm = nn::LayerNorm(store, p + ".memory_norm", c.position_dim);
    blk.attention = nn::MultiHeadAttention(store, p + ".attn", c.position_dim, c.heads);
    blk.ffn_norm = nn::LayerNorm(store, p + ".ffn_norm", c.position_dim);
    blk.ffn = nn::FeedForward(store, p + ".ffn", c.position_dim, c.ffn_hidden);
    blocks.push_back(std::move(blk));
  }
  projection = nn::Linear(store, "cxt.projection", c.position_dim, c.dim);
}

nn::Tensor ContextBranch::embed(const nn::Tensor& context) const {
  if (context.rank() != 2 || context.dim(1) != in1.weight.dim(0)) {
    throw ConfigError("context " + nn::shape_str(context.shape()) +
                      " does not match configured dimension " +
                      std::to_string(in1.weight.dim(0)));
  }
  nn::Tensor h = nn::gelu(norm1(in1(context)));
  h = nn::gelu(norm2(in2(h)));
  return out(h);
}

nn::Tensor ContextBranch::operator()(const nn::Tensor& context, nn::Tensor* attention) const {
  const std::size_t b = context.dim(0);
  nn::Tensor pt = embed(context);
  nn::Tensor pt3 = nn::reshape(pt, {b, 1, pt.dim(1)});
  nn::Tensor ps = broadcast_rows(positions, b);
  // The stream starts as P^s shifted by P^t, so queries carry the context;
  // keys and values always come from (normalized) P^s.
  nn::Tensor x = nn::add(ps, pt3);
  for (const auto& blk : blocks) {
    nn::Tensor q = blk.query_norm(x);
    nn::Tensor kv = blk.memory_norm(ps);
    x = nn::add(x, blk.attention(q, kv, kv, attention));
    x = nn::add(x, blk.ffn(blk.ffn_norm(x)));
  }
  return nn::l2_normalize(projection(x));
}

MotionBranch::MotionBranch(nn::ParameterStore& store, const ModelConfig& c)
    : use_vq(c.toggles.vq), words(c.codebook_size) {
  if (use_vq) {
    table = store.create("mot.embedding", {c.codebook_size, c.dim}, nn::Init::kTruncNormal);
    pair = nn::Linear(store, "mot.pair", 2 * c.dim, c.dim);
  } else {
    raw = nn::Linear(store, "mot.raw", flow::kHofChannels, c.dim);
  }
  token_norm = nn::LayerNorm(store, "mot.token_norm", c.dim);
  head = store.create("mot.head", {1, 1, c.dim}, nn::Init::kTruncNormal);
  positions = store.create("mot.positions", {c.tokens(), c.dim}, nn::Init::kTruncNormal);
  for (std::size_t i = 0; i < c.motion_blocks; ++i) {
    blocks.emplace_back(store, "mot.block" + std::to_string(i), c.dim, c.heads, c.ffn_hidden);
  }
  final_norm = nn::LayerNorm(store, "mot.final_norm", c.dim);
  projection = nn::Linear(store, "mot.projection", c.dim, c.dim);
}

nn::Tensor MotionBranch::operator()(const MotionInput& input, std::size_t batch) const {
  const std::size_t l = positions.dim(0) - 1;
  nn::Tensor local;
  if (use_vq) {
    if (input.q.size() != batch * l || input.err.size() != batch * l) {
      throw ContractViolation("motion tokens: expected " + std::to_string(batch * l) +
                              " (q, err) pairs, got " + std::to_string(input.q.size()) +
                              "/" + std::to_string(input.err.size()));
    }
    for (std::size_t i = 0; i < input.q.size(); ++i) {
      if (input.q[i] >= words || input.err[i] >= words) {
        throw ContractViolation("motion token index out of range [0, " +
                                std::to_string(words) + ")");
      }
    }
    nn::Tensor eq = nn::embedding(table, input.q, {batch, l});
    nn::Tensor ee = nn::embedding(table, input.err, {batch, l});
    local = pair(nn::concat({eq, ee}, -1));
  } else {
    if (!input.hof.defined() || input.hof.shape() != nn::Shape{batch, l, flow::kHofChannels}) {
      throw ContractViolation("motion features: expected [" + std::to_string(batch) + ", " +
                              std::to_string(l) + ", 25]");
    }
    local = raw(input.hof);
  }
  local = token_norm(local);
  return encode_tokens(local, head, positions, blocks, final_norm, projection);
}

UNet::UNet(nn::ParameterStore& store, const ModelConfig& c) {
  const auto& ch = c.unet_channels;
  const std::size_t in = c.frames - 1;
  enc1 = nn::Conv2d(store, "app.unet.enc1", in, ch[0], 3, 1, 1);
  enc2 = nn::Conv2d(store, "app.unet.enc2", ch[0], ch[1], 3, 1, 1);
  enc3 = nn::Conv2d(store, "app.unet.enc3", ch[1], ch[2], 3, 1, 1);
  bottleneck = nn::Conv2d(store, "app.unet.bottleneck", ch[2], ch[3], 3, 1, 1);
  dec3 = nn::Conv2d(store, "app.unet.dec3", ch[3] + ch[2], ch[2], 3, 1, 1);
  dec2 = nn::Conv2d(store, "app.unet.dec2", ch[2] + ch[1], ch[1], 3, 1, 1);
  dec1 = nn::Conv2d(store, "app.unet.dec1", ch[1] + ch[0], ch[0], 3, 1, 1);
  head = nn::Conv2d(store, "app.unet.head", ch[0], 1, 3, 1, 1);
}

std::pair<nn::Tensor, nn::Tensor> UNet::operator()(const nn::Tensor& x) const {
  nn::Tensor e1 = nn::relu(enc1(x));
  nn::Tensor e2 = nn::relu(enc2(nn::max_pool2d(e1, 2)));
  nn::Tensor e3 = nn::relu(enc3(nn::max_pool2d(e2, 2)));
  nn::Tensor z = nn::relu(bottleneck(nn::max_pool2d(e3, 2)));
  nn::Tensor d3 = nn::relu(dec3(nn::concat({nn::upsample_nearest2d(z, 2), e3}, 1)));
  nn::Tensor d2 = nn::relu(dec2(nn::concat({nn::upsample_nearest2d(d3, 2), e2}, 1)));
  nn::Tensor d1 = nn::relu(dec1(nn::concat({nn::upsample_nearest2d(d2, 2), e1}, 1)));
  return {nn::tanh(head(d1)), z};
}

AppearanceBranch::AppearanceBranch(nn::ParameterStore& store, const ModelConfig& c)
    : unet(store, c) {
  const std::size_t r = c.patch / 8;
  tokenizer = nn::Conv2d(store, "app.tokenizer", c.unet_channels[3], c.dim, r, r, 0);
  head = store.create("app.head", {1, 1, c.dim}, nn::Init::kTruncNormal);
  positions = store.create("app.positions", {c.tokens(), c.dim}, nn::Init::kTruncNormal);
  for (std::size_t i = 0; i < c.appearance_blocks; ++i) {
    blocks.emplace_back(store, "app.block" + std::to_string(i), c.dim, c.heads, c.ffn_hidden);
  }
  final_norm = nn::LayerNorm(store, "app.final_norm", c.dim);
  projection = nn::Linear(store, "app.projection", c.dim, c.dim);
}

AppearanceOutput AppearanceBranch::operator()(const nn::Tensor& frames) const {
  const std::size_t b = frames.dim(0), t = frames.dim(1);
  const std::size_t h = frames.dim(2), w = frames.dim(3);
  nn::Tensor inputs = nn::slice(frames, 1, 0, t - 1);
  nn::Tensor target = nn::slice(frames, 1, t - 1, 1);
  auto [prediction, z] = unet(inputs);
  AppearanceOutput out;
  out.prediction = prediction;
  out.bottleneck = z;
  out.recon_loss = nn::mean(nn::square(nn::sub(prediction, target)));
  // Stop-gradient: alignment never reaches the U-net encoder.
  nn::Tensor tokens = tokenizer(z.detach());  // [B, D, rows, cols]
  const std::size_t d = tokens.dim(1);
  const std::size_t l = tokens.dim(2) * tokens.dim(3);
  nn::Tensor local = nn::permute(nn::reshape(tokens, {b, d, l}), {0, 2, 1});
  if (l + 1 != positions.dim(0)) {
    throw ContractViolation("appearance tokens " + std::to_string(l) + " do not match grid " +
                            std::to_string(positions.dim(0) - 1) + " (frame " +
                            std::to_string(h) + "x" + std::to_string(w) + ")");
  }
  out.h = encode_tokens(local, head, positions, blocks, final_norm, projection);
  return out;
}

TrinityModel::TrinityModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), store_(seed) {
  config_.validate();
  log_temperature_ = store_.create_from("log_temperature", {1},
                                        {std::log(config_.initial_temperature)});
  if (config_.mode == Mode::kContextual) context_ = ContextBranch(store_, config_);
  motion_ = MotionBranch(store_, config_);
  appearance_ = AppearanceBranch(store_, config_);
}

double TrinityModel::temperature_value() const {
  return std::exp(log_temperature_.data()[0]);
}

ForwardOutput TrinityModel::forward(const Batch& batch) const {
  check_frames(batch.frames, config_);
  const std::size_t b = batch.size();
  ForwardOutput out;
  if (config_.mode == Mode::kContextual) {
    if (!batch.context.defined() || batch.context.rank() != 2 || batch.context.dim(0) != b) {
      throw ContractViolation("context batch does not match frame batch");
    }
    out.h_cxt = context_(batch.context, &out.context_attention);
  }
  out.h_mot = motion_(batch.motion, b);
  AppearanceOutput app = appearance_(batch.frames);
  out.h_app = app.h;
  out.prediction = app.prediction;
  out.recon_loss = app.recon_loss;
  return out;
}

}  // namespace trinity::model

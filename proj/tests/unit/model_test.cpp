#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "trinity/align/losses.hpp"
#include "trinity/data/world.hpp"
#include "trinity/error.hpp"
#include "trinity/model/trinity_model.hpp"
#include "trinity/numerics/optim.hpp"

namespace nn = trinity::nn;
namespace model = trinity::model;
namespace data = trinity::data;

namespace {

model::Batch make_batch(const model::ModelConfig& c, const std::vector<data::Moment>& moments,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> px(-0.9, 0.9);
  const std::size_t b = moments.size(), hw = c.image_height * c.image_width;
  std::vector<double> frames(b * c.frames * hw), ctx;
  for (double& v : frames) v = px(rng);
  for (const auto& m : moments) {
    const auto e = data::encode_context(m, c.context);
    ctx.insert(ctx.end(), e.begin(), e.end());
  }
  model::Batch batch;
  batch.frames = nn::Tensor::from_data({b, c.frames, c.image_height, c.image_width}, frames);
  batch.context = nn::Tensor::from_data({b, c.context.dimension()}, ctx);
  std::uniform_int_distribution<std::size_t> word(0, c.codebook_size - 1);
  for (std::size_t i = 0; i < b * c.local_tokens(); ++i) {
    batch.motion.q.push_back(word(rng));
    batch.motion.err.push_back(word(rng));
  }
  return batch;
}

// Sample `i` of a [B, ...] tensor as a flat vector.
std::vector<double> row(const nn::Tensor& t, std::size_t i) {
  const std::size_t n = t.numel() / t.dim(0);
  return {t.data().begin() + static_cast<long>(i * n), t.data().begin() + static_cast<long>((i + 1) * n)};
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

const data::Moment kMorning{0, 10, 0, 0};
const data::Moment kGameNight{5, 18, 0, 19};

}  // namespace

TEST(ModelConfig, TokenCounts) {
  EXPECT_EQ(model::ModelConfig{}.tokens(), 17u);
  EXPECT_EQ(model::ModelConfig::large().tokens(), 257u);
  EXPECT_EQ(model::ModelConfig::large().context_dim, 128u);
}

TEST(ModelConfig, DocumentRoundTrip) {
  model::ModelConfig c;
  c.mode = model::Mode::kContextFree;
  c.toggles = model::Toggles::parse("GA+VQ+LP");
  c.tscab_blocks = 1;
  trinity::KvDocument doc("trinity-config", 1);
  c.write(doc);
  EXPECT_EQ(model::ModelConfig::read(doc), c);
}

TEST(ModelConfig, InvalidShapesRejected) {
  model::ModelConfig c;
  c.patch = 12;
  EXPECT_THROW(c.validate(), trinity::ConfigError);
  c = {};
  c.heads = 5;
  EXPECT_THROW(c.validate(), trinity::ConfigError);
}

TEST(Model, SingleSampleShapesAndUnitTokens) {
  model::ModelConfig c;
  model::TrinityModel m(c, 1);
  const auto out = m.forward(make_batch(c, {kMorning}, 2));
  for (const nn::Tensor* h : {&out.h_cxt, &out.h_mot, &out.h_app}) {
    ASSERT_EQ(h->shape(), (nn::Shape{1, 17, 64}));
    for (std::size_t t = 0; t < 17; ++t) {
      double s = 0.0;
      for (std::size_t d = 0; d < 64; ++d) s += h->data()[t * 64 + d] * h->data()[t * 64 + d];
      EXPECT_NEAR(std::sqrt(s), 1.0, 1e-6);
    }
  }
  EXPECT_EQ(out.prediction.shape(), (nn::Shape{1, 1, 64, 64}));
  EXPECT_EQ(out.context_attention.shape(), (nn::Shape{1, 8, 17, 17}));
}

TEST(Model, ContextTokensDependOnContextOnly) {
  model::ModelConfig c;
  model::TrinityModel m(c, 3);
  const auto pair = m.forward(make_batch(c, {kMorning, kMorning}, 4));
  const auto alone = m.forward(make_batch(c, {kMorning}, 9));
  EXPECT_LT(max_diff(row(pair.h_cxt, 0), row(pair.h_cxt, 1)), 1e-12);
  EXPECT_LT(max_diff(row(pair.h_cxt, 0), row(alone.h_cxt, 0)), 1e-12);
  const auto other = m.forward(make_batch(c, {kGameNight}, 4));
  EXPECT_GT(max_diff(row(pair.h_cxt, 0), row(other.h_cxt, 0)), 1e-6);
}

TEST(Model, BatchPermutationPermutesOutputs) {
  model::ModelConfig c;
  model::TrinityModel m(c, 5);
  const auto ab = make_batch(c, {kMorning, kGameNight}, 6);
  model::Batch ba;
  auto swap_rows = [](const nn::Tensor& t) {
    auto a = row(t, 0), b = row(t, 1);
    b.insert(b.end(), a.begin(), a.end());
    return nn::Tensor::from_data(t.shape(), b);
  };
  ba.frames = swap_rows(ab.frames);
  ba.context = swap_rows(ab.context);
  const std::size_t l = c.local_tokens();
  for (auto* v : {&ab.motion.q, &ab.motion.err}) {
    std::vector<std::size_t> s(v->begin() + static_cast<long>(l), v->end());
    s.insert(s.end(), v->begin(), v->begin() + static_cast<long>(l));
    (v == &ab.motion.q ? ba.motion.q : ba.motion.err) = s;
  }
  const auto x = m.forward(ab), y = m.forward(ba);
  for (auto field : {&model::ForwardOutput::h_cxt, &model::ForwardOutput::h_mot,
                     &model::ForwardOutput::h_app, &model::ForwardOutput::prediction}) {
    EXPECT_LT(max_diff(row(x.*field, 0), row(y.*field, 1)), 1e-12);
    EXPECT_LT(max_diff(row(x.*field, 1), row(y.*field, 0)), 1e-12);
  }
}

TEST(Model, ContractChecks) {
  model::ModelConfig c;
  model::TrinityModel m(c, 1);
  auto b = make_batch(c, {kMorning}, 1);
  auto bad = b;
  auto px = bad.frames.data();
  std::vector<double> v(px.begin(), px.end());
  v[5] = 1.5;
  bad.frames = nn::Tensor::from_data(b.frames.shape(), v);
  EXPECT_THROW(m.forward(bad), trinity::ContractViolation);
  bad = b;
  bad.motion.q[3] = c.codebook_size;
  EXPECT_THROW(m.forward(bad), trinity::ContractViolation);
  bad = b;
  bad.context = nn::Tensor::zeros({1, 56});
  EXPECT_THROW(m.forward(bad), trinity::ConfigError);
}

TEST(Model, ContextFreeHasNoContextBranchOutput) {
  model::ModelConfig c;
  c.mode = model::Mode::kContextFree;
  model::TrinityModel m(c, 1);
  const auto out = m.forward(make_batch(c, {kMorning}, 2));
  EXPECT_FALSE(out.h_cxt.defined());
  EXPECT_EQ(out.h_mot.shape(), out.h_app.shape());
}

TEST(Model, RawFeaturesWithoutQuantization) {
  model::ModelConfig c;
  c.toggles = model::Toggles::parse("GA");
  model::TrinityModel m(c, 1);
  auto b = make_batch(c, {kMorning, kGameNight}, 2);
  b.motion = {};
  EXPECT_THROW(m.forward(b), trinity::ContractViolation);
  b.motion.hof = nn::Tensor::zeros({2, c.local_tokens(), 25});
  EXPECT_EQ(m.forward(b).h_mot.shape(), (nn::Shape{2, 17, 64}));
}

TEST(Model, AlignmentLossesDoNotReachTheUnetEncoder) {
  model::ModelConfig c;
  model::TrinityModel m(c, 7);
  const auto out = m.forward(make_batch(c, {kMorning, kGameNight, kMorning}, 8));
  const auto loss = trinity::align::trinity_loss(out, m.temperature(), c.mode, c.toggles);
  nn::backward(nn::add(loss.global, loss.local));
  for (const auto& [name, t] : m.parameters().entries()) {
    if (!name.starts_with("app.unet.enc") && !name.starts_with("app.unet.bottleneck")) continue;
    for (double g : t.grad()) ASSERT_EQ(g, 0.0) << name;
  }
  double tokenizer = 0.0;
  for (double g : m.parameters().get("app.tokenizer.weight").grad()) tokenizer += std::abs(g);
  EXPECT_GT(tokenizer, 0.0);
}

TEST(Model, OverfitsOneStaticClip) {
  model::ModelConfig c;
  model::TrinityModel m(c, 11);
  // Identical frames: the target equals every input frame.
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> px(-0.8, 0.8);
  std::vector<double> frame(64 * 64), frames;
  for (double& v : frame) v = px(rng);
  for (std::size_t t = 0; t < c.frames; ++t) frames.insert(frames.end(), frame.begin(), frame.end());
  auto batch = make_batch(c, {kMorning}, 1);
  batch.frames = nn::Tensor::from_data({1, c.frames, 64, 64}, frames);
  std::vector<nn::Tensor> unet;
  for (const auto& [name, t] : m.parameters().entries()) {
    if (name.starts_with("app.unet.")) unet.push_back(t);
  }
  nn::Adam adam(unet, nn::CosineSchedule{3e-3, 3e-3, 300});
  double last = 1.0;
  for (int step = 0; step < 300 && last >= 1e-2; ++step) {
    m.parameters().zero_grad();
    const auto r = m.appearance_branch()(batch.frames);
    last = r.recon_loss.item();
    nn::backward(r.recon_loss);
    adam.step();
  }
  EXPECT_LT(last, 1e-2);
}

TEST(Model, GradientsDoNotDependOnHeapLayout) {
  model::ModelConfig c;
  model::TrinityModel m(c, 13);
  const auto batch = make_batch(c, {kMorning, kGameNight, kMorning, kGameNight}, 14);
  std::vector<std::vector<double>> grads, spacers;
  for (int rep = 0; rep < 6; ++rep) {
    // Shift later allocations so gradient buffers land at different alignments.
    spacers.emplace_back(static_cast<std::size_t>(rep * 13 + 1), 0.0);
    m.parameters().zero_grad();
    const auto out = m.forward(batch);
    nn::backward(trinity::align::trinity_loss(out, m.temperature(), c.mode, c.toggles).total);
    std::vector<double> g;
    for (const auto& [name, t] : m.parameters().entries()) g.insert(g.end(), t.grad().begin(), t.grad().end());
    grads.push_back(std::move(g));
  }
  for (std::size_t rep = 1; rep < grads.size(); ++rep) EXPECT_EQ(grads[rep], grads[0]) << rep;
}

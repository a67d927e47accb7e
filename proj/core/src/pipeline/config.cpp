#include "trinity/pipeline/config.hpp"

#include "trinity/error.hpp"

namespace trinity::pipeline {

namespace {
constexpr char kKind[] = "trinity-config";
constexpr std::uint32_t kVersion = 1;
}  // namespace

double PipelineConfig::default_alpha(model::Mode mode) {
  return mode == model::Mode::kContextual ? 0.3 : 0.7;
}

void PipelineConfig::validate() const {
  model.validate();
  model.toggles.validate();
  data.world.validate();
  train.weights.validate();
  if (data.world.height != model.image_height || data.world.width != model.image_width) {
    throw ConfigError("world frame size differs from model.image_height/width");
  }
  if (!(data.layout == model.context)) {
    throw ConfigError("data.context_layout differs from model.context_layout");
  }
  if (data.clip_frames != model.frames) throw ConfigError("data.clip_frames must equal model.frames");
  if (data.pseudo_frames < model.frames || data.test_frames < model.frames) {
    throw ConfigError("pseudo and test videos need at least model.frames frames");
  }
  if (train.epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (train.batch_size < 2) throw ConfigError("train.batch_size must be >= 2 (NCE needs negatives)");
  if (!(train.learning_rate > 0.0) || train.min_learning_rate < 0.0 ||
      train.min_learning_rate > train.learning_rate) {
    throw ConfigError("need 0 <= train.min_learning_rate <= train.learning_rate, rate > 0");
  }
  if (!(scoring.alpha >= 0.0 && scoring.alpha <= 1.0)) throw ConfigError("score.alpha must lie in [0, 1]");
  if (scoring.kernel % 2 == 0) throw ConfigError("score.kernel must be odd");
  if (scoring.batch_size == 0) throw ConfigError("score.batch_size must be >= 1");
  if (vq.epochs == 0 || !(vq.learning_rate > 0.0)) throw ConfigError("invalid vq options");
  if (!(motion.magnitude_threshold >= 0.0)) throw ConfigError("motion.magnitude_threshold must be >= 0");
}

KvDocument PipelineConfig::to_document() const {
  KvDocument doc(kKind, kVersion);
  doc.set("seed", seed);
  data.write(doc);
  model.write(doc);
  doc.set("motion.use_gt_flow", motion.use_gt_flow);
  doc.set("motion.magnitude_threshold", motion.magnitude_threshold);
  doc.set("motion.lambda", motion.solver.lambda);
  doc.set("motion.theta", motion.solver.theta);
  doc.set("motion.tau", motion.solver.tau);
  doc.set("motion.iterations", static_cast<std::uint64_t>(motion.solver.iterations));
  doc.set("motion.warps", static_cast<std::uint64_t>(motion.solver.warps));
  doc.set("vq.epochs", static_cast<std::uint64_t>(vq.epochs));
  doc.set("vq.learning_rate", vq.learning_rate);
  doc.set("vq.batch_size", static_cast<std::uint64_t>(vq.batch_size));
  doc.set("train.epochs", static_cast<std::uint64_t>(train.epochs));
  doc.set("train.batch_size", static_cast<std::uint64_t>(train.batch_size));
  doc.set("train.learning_rate", train.learning_rate);
  doc.set("train.min_learning_rate", train.min_learning_rate);
  doc.set("train.max_grad_norm", train.max_grad_norm);
  doc.set("train.local_weight", train.weights.local);
  doc.set("train.global_weight", train.weights.global);
  doc.set("score.alpha", scoring.alpha);
  doc.set("score.kernel", static_cast<std::uint64_t>(scoring.kernel));
  doc.set("score.batch_size", static_cast<std::uint64_t>(scoring.batch_size));
  return doc;
}

PipelineConfig PipelineConfig::from_document(const KvDocument& doc) {
  doc.expect(kKind, kVersion);
  PipelineConfig c;
  c.seed = doc.get_uint_or("seed", c.seed);
  c.data = data::DatasetSpec::read(doc);
  c.model = model::ModelConfig::read(doc);
  auto& m = c.motion;
  m.use_gt_flow = doc.get_bool_or("motion.use_gt_flow", m.use_gt_flow);
  m.magnitude_threshold = doc.get_double_or("motion.magnitude_threshold", m.magnitude_threshold);
  m.solver.lambda = doc.get_double_or("motion.lambda", m.solver.lambda);
  m.solver.theta = doc.get_double_or("motion.theta", m.solver.theta);
  m.solver.tau = doc.get_double_or("motion.tau", m.solver.tau);
  m.solver.iterations = doc.get_uint_or("motion.iterations", m.solver.iterations);
  m.solver.warps = doc.get_uint_or("motion.warps", m.solver.warps);
  c.vq.epochs = doc.get_uint_or("vq.epochs", c.vq.epochs);
  c.vq.learning_rate = doc.get_double_or("vq.learning_rate", c.vq.learning_rate);
  c.vq.batch_size = doc.get_uint_or("vq.batch_size", c.vq.batch_size);
  auto& t = c.train;
  t.epochs = doc.get_uint_or("train.epochs", t.epochs);
  t.batch_size = doc.get_uint_or("train.batch_size", t.batch_size);
  t.learning_rate = doc.get_double_or("train.learning_rate", t.learning_rate);
  t.min_learning_rate = doc.get_double_or("train.min_learning_rate", t.min_learning_rate);
  t.max_grad_norm = doc.get_double_or("train.max_grad_norm", t.max_grad_norm);
  t.weights.local = doc.get_double_or("train.local_weight", t.weights.local);
  t.weights.global = doc.get_double_or("train.global_weight", t.weights.global);
  c.scoring.alpha = doc.get_double_or("score.alpha", default_alpha(c.model.mode));
  c.scoring.kernel = doc.get_uint_or("score.kernel", c.scoring.kernel);
  c.scoring.batch_size = doc.get_uint_or("score.batch_size", c.scoring.batch_size);
  c.vq.codebook_size = c.model.codebook_size;
  c.vq.seed = c.seed;
  // The layout lives in both sections; a document may set either.
  if (doc.has("data.context_layout") && !doc.has("model.context_layout")) {
    c.model.context = c.data.layout;
  } else {
    c.data.layout = c.model.context;
  }
  c.data.world.height = c.model.image_height;
  c.data.world.width = c.model.image_width;
  c.data.clip_frames = c.model.frames;
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("config file not found: " + path.string());
  return from_document(KvDocument::load(path));
}

void PipelineConfig::save(const std::filesystem::path& path) const { to_document().save(path); }

}  // namespace trinity::pipeline

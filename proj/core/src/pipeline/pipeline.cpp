#include "trinity/pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

#include "trinity/align/losses.hpp"
#include "trinity/binary_io.hpp"
#include "trinity/error.hpp"
#include "trinity/numerics/optim.hpp"

namespace trinity::pipeline {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::vector<flow::FlowField> record_flow(const data::ClipRecord& record, std::size_t height,
                                         std::size_t width, const MotionOptions& motion) {
  if (motion.use_gt_flow) {
    if (record.flow.size() + 1 != record.frames) {
      throw DataError("clip '" + record.id +
                      "' has no stored ground-truth flow; run without --use-gt-flow");
    }
    return record.flow;
  }
  std::vector<flow::FlowField> out;
  out.reserve(record.frames - 1);
  for (std::size_t t = 0; t + 1 < record.frames; ++t) {
    out.push_back(flow::compute_flow(record.frame(t, height, width),
                                     record.frame(t + 1, height, width), motion.solver));
  }
  return out;
}

std::vector<ClipSample> make_samples(const data::ClipRecord& record, std::size_t height,
                                     std::size_t width, const model::ModelConfig& config,
                                     const MotionOptions& motion) {
  const std::size_t t = config.frames;
  if (height != config.image_height || width != config.image_width) {
    throw ConfigError("dataset frames are " + std::to_string(height) + "x" +
                      std::to_string(width) + " but the model expects " +
                      std::to_string(config.image_height) + "x" +
                      std::to_string(config.image_width));
  }
  if (record.frames < t) {
    throw DataError("clip '" + record.id + "' has fewer than " + std::to_string(t) + " frames");
  }
  if (record.context.size() != config.context.dimension()) {
    throw DataError("clip '" + record.id + "' context width differs from the model layout");
  }
  const auto flows = record_flow(record, height, width, motion);
  std::vector<flow::HofGrid> grids;
  grids.reserve(flows.size());
  for (const auto& f : flows) {
    grids.push_back(flow::hof_features(f, config.patch, motion.magnitude_threshold));
  }
  const std::size_t plane = height * width;
  std::vector<ClipSample> out;
  for (std::size_t s = 0; s + t <= record.frames; ++s) {
    ClipSample c;
    c.frames.assign(record.pixels.begin() + static_cast<long>(s * plane),
                    record.pixels.begin() + static_cast<long>((s + t) * plane));
    c.context = record.context;
    const flow::HofGrid avg =
        flow::average_hof(std::span<const flow::HofGrid>(grids).subspan(s, t - 1));
    for (const auto& p : avg.patches) c.hof.insert(c.hof.end(), p.channels.begin(), p.channels.end());
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<double> collect_hof(std::span<const ClipSample> samples) {
  std::vector<double> out;
  for (const auto& s : samples) out.insert(out.end(), s.hof.begin(), s.hof.end());
  return out;
}

void assign_tokens(std::span<ClipSample> samples, const vq::Codebook& codebook) {
  const std::size_t d = codebook.dim();
  for (auto& s : samples) {
    if (s.hof.size() % d) throw ContractViolation("assign_tokens: HOF width differs from codebook");
    const std::size_t n = s.hof.size() / d;
    s.q.resize(n);
    s.err.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const vq::TokenPair p =
          vq::error_code(std::span<const double>(s.hof).subspan(i * d, d), codebook);
      s.q[i] = p.q_index;
      s.err[i] = p.err_index;
    }
  }
}

model::Batch assemble_batch(std::span<const ClipSample* const> samples,
                            const model::ModelConfig& config) {
  if (samples.empty()) throw ContractViolation("assemble_batch: empty batch");
  const std::size_t b = samples.size();
  const std::size_t frame_values = config.frames * config.image_height * config.image_width;
  const std::size_t y = config.context.dimension();
  const std::size_t l = config.local_tokens();
  std::vector<double> frames, context, hof;
  frames.reserve(b * frame_values);
  context.reserve(b * y);
  model::Batch batch;
  for (const ClipSample* s : samples) {
    if (s->frames.size() != frame_values || s->context.size() != y ||
        s->hof.size() != l * flow::kHofChannels) {
      throw ContractViolation("assemble_batch: sample does not match the model config");
    }
    frames.insert(frames.end(), s->frames.begin(), s->frames.end());
    context.insert(context.end(), s->context.begin(), s->context.end());
    if (config.toggles.vq) {
      if (s->q.size() != l || s->err.size() != l) {
        throw ContractViolation("assemble_batch: sample has no motion tokens (assign_tokens first)");
      }
      batch.motion.q.insert(batch.motion.q.end(), s->q.begin(), s->q.end());
      batch.motion.err.insert(batch.motion.err.end(), s->err.begin(), s->err.end());
    } else {
      hof.insert(hof.end(), s->hof.begin(), s->hof.end());
    }
  }
  batch.frames = nn::Tensor::from_data(
      {b, config.frames, config.image_height, config.image_width}, std::move(frames));
  batch.context = nn::Tensor::from_data({b, y}, std::move(context));
  if (!config.toggles.vq) {
    batch.motion.hof = nn::Tensor::from_data({b, l, flow::kHofChannels}, std::move(hof));
  }
  return batch;
}

TrainReport train_model(model::TrinityModel& model, std::span<const ClipSample> samples,
                        const TrainOptions& options, std::uint64_t seed,
                        const std::function<void(const StepRecord&)>& on_step) {
  const auto start = std::chrono::steady_clock::now();
  const auto& config = model.config();
  if (samples.size() < 2) throw DataError("training needs at least 2 clips");
  if (options.batch_size < 2) throw ConfigError("batch size must be >= 2");
  const std::size_t full = samples.size() / options.batch_size;
  const std::size_t tail = samples.size() % options.batch_size;
  const std::size_t per_epoch = full + (tail >= 2 ? 1 : 0);
  nn::CosineSchedule schedule{options.learning_rate, options.min_learning_rate,
                              static_cast<std::uint64_t>(per_epoch * options.epochs)};
  nn::AdamOptions adam_options;
  adam_options.max_grad_norm = options.max_grad_norm;
  nn::Adam adam(model.parameters(), schedule, adam_options);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainReport report;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t lo = b * options.batch_size;
      const std::size_t hi = std::min(samples.size(), lo + options.batch_size);
      std::vector<const ClipSample*> members;
      for (std::size_t i = lo; i < hi; ++i) members.push_back(&samples[order[i]]);
      const model::Batch batch = assemble_batch(members, config);
      const model::ForwardOutput out = model.forward(batch);
      const align::LossBreakdown loss = align::trinity_loss(
          out, model.temperature(), config.mode, config.toggles, options.weights);
      StepRecord rec;
      rec.step = adam.step_count();
      rec.epoch = epoch;
      rec.lr = adam.current_rate();
      rec.tau = model.temperature_value();
      rec.total = loss.total.item();
      rec.recon = loss.recon.item();
      for (const auto& [name, t] : loss.terms) rec.terms.emplace_back(name, t.item());
      nn::backward(loss.total);
      adam.step();
      epoch_sum += rec.total;
      if (on_step) on_step(rec);
      report.steps.push_back(std::move(rec));
    }
    report.epoch_loss.push_back(epoch_sum / static_cast<double>(per_epoch));
  }
  report.seconds = seconds_since(start);
  return report;
}

void write_loss_csv(const std::filesystem::path& path, const TrainReport& report) {
  std::string out = "step,epoch,total,L_recon";
  if (!report.steps.empty()) {
    for (const auto& [name, v] : report.steps.front().terms) out += "," + name;
  }
  out += ",tau,lr\n";
  for (const auto& s : report.steps) {
    out += std::to_string(s.step) + "," + std::to_string(s.epoch) + "," + fmt(s.total) + "," +
           fmt(s.recon);
    for (const auto& [name, v] : s.terms) out += "," + fmt(v);
    out += "," + fmt(s.tau) + "," + fmt(s.lr) + "\n";
  }
  io::write_file_atomic(path, out);
}

ClipScores score_clips(const model::TrinityModel& model, std::span<const ClipSample> samples,
                       std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("scoring batch size must be >= 1");
  nn::NoGradGuard no_grad;
  const auto& config = model.config();
  const double tau = model.temperature_value();
  const std::size_t plane = config.image_height * config.image_width;
  ClipScores out;
  for (std::size_t lo = 0; lo < samples.size(); lo += batch_size) {
    const std::size_t hi = std::min(samples.size(), lo + batch_size);
    std::vector<const ClipSample*> members;
    for (std::size_t i = lo; i < hi; ++i) members.push_back(&samples[i]);
    const model::Batch batch = assemble_batch(members, config);
    const model::ForwardOutput f = model.forward(batch);
    const auto pred = f.prediction.data();
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto target =
          std::span<const double>(members[i]->frames).subspan((config.frames - 1) * plane, plane);
      out.psnr.push_back(infer::frame_psnr(pred.subspan(i * plane, plane), target));
    }
    const nn::Tensor mot_g = align::global_tokens(f.h_mot);
    const nn::Tensor app_g = align::global_tokens(f.h_app);
    if (f.h_cxt.defined()) {
      const nn::Tensor cxt_g = align::global_tokens(f.h_cxt);
      for (double v : infer::sigmoid_similarity(cxt_g, mot_g, tau)) out.cxt_mot.push_back(v);
      for (double v : infer::sigmoid_similarity(cxt_g, app_g, tau)) out.cxt_app.push_back(v);
    }
    for (double v : infer::local_misalignment(align::local_tokens(f.h_app),
                                              align::local_tokens(f.h_mot), tau)) {
      out.misalign.push_back(v);
    }
  }
  return out;
}

infer::ScoreTimeline video_timeline(const ClipScores& clips, std::size_t clip_length,
                                    AuxScore aux, double alpha, std::size_t kernel,
                                    std::vector<int> labels) {
  std::vector<double> s_r =
      infer::psnr_score(infer::clip_to_frames(clips.psnr, clip_length));
  std::vector<double> s_aux;
  switch (aux) {
    case AuxScore::kGlobal: {
      if (clips.cxt_mot.size() != clips.psnr.size()) {
        throw ConfigError("global context score needs a contextual model");
      }
      std::vector<double> g(clips.cxt_mot.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.5 * (clips.cxt_mot[i] + clips.cxt_app[i]);
      s_aux = infer::clip_to_frames(g, clip_length);
      break;
    }
    case AuxScore::kMotionOnly:
      if (clips.cxt_mot.size() != clips.psnr.size()) {
        throw ConfigError("context-motion score needs a contextual model");
      }
      s_aux = infer::clip_to_frames(clips.cxt_mot, clip_length);
      break;
    case AuxScore::kLocal:
      s_aux = infer::clip_to_frames(infer::local_normalcy(clips.misalign), clip_length);
      break;
    case AuxScore::kNone:
      s_aux = s_r;
      alpha = 1.0;
      break;
  }
  return infer::fuse_and_smooth(std::move(s_r), std::move(s_aux), alpha, kernel,
                                std::move(labels));
}

void write_score_csv(const std::filesystem::path& path, const infer::ScoreTimeline& tl) {
  std::string out = "frame_index,S_r,S_aux,S,anomaly,label\n";
  for (std::size_t i = 0; i < tl.size(); ++i) {
    out += std::to_string(i) + "," + fmt(tl.s_r[i]) + "," + fmt(tl.s_aux[i]) + "," +
           fmt(tl.normalcy[i]) + "," + fmt(tl.anomaly[i]) + "," +
           (tl.labels.empty() ? std::string("") : std::to_string(tl.labels[i])) + "\n";
  }
  io::write_file_atomic(path, out);
}

std::vector<VideoSamples> prepare_split(const data::Dataset& dataset, const std::string& split,
                                        const model::ModelConfig& config,
                                        const MotionOptions& motion) {
  std::vector<VideoSamples> out;
  for (const data::ClipRecord* r : dataset.split(split)) {
    out.push_back({r, make_samples(*r, dataset.height, dataset.width, config, motion)});
  }
  return out;
}

std::vector<ClipSample> flatten(std::vector<VideoSamples>&& videos) {
  std::vector<ClipSample> out;
  for (auto& v : videos) {
    std::move(v.samples.begin(), v.samples.end(), std::back_inserter(out));
  }
  return out;
}

vq::PretrainResult pretrain_vq(std::span<const ClipSample> train,
                               const vq::PretrainOptions& options) {
  if (train.empty()) throw DataError("no training clips to pretrain the codebook on");
  return vq::pretrain_codebook(collect_hof(train), flow::kHofChannels, options);
}

namespace {

std::vector<ClipSample> with_context(const std::vector<ClipSample>& samples,
                                     const std::vector<double>& context) {
  std::vector<ClipSample> out = samples;
  for (auto& s : out) s.context = context;
  return out;
}

}  // namespace

PseudoEvaluation evaluate_pseudo(const model::TrinityModel& model, const data::Dataset& dataset,
                                 const std::vector<VideoSamples>& videos,
                                 const ScoringOptions& scoring) {
  if (model.config().mode != model::Mode::kContextual) {
    throw ConfigError("the pseudo-context protocol needs a contextual model");
  }
  const auto cases = data::build_pseudo_cases(dataset, "pseudo");
  std::map<std::string, const VideoSamples*> by_id;
  for (const auto& v : videos) by_id[v.record->id] = &v;
  // Clip scores for (case, altered?) computed once and reused by all three scorers.
  std::vector<std::array<ClipScores, 2>> cache(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto it = by_id.find(cases[i].clip_id);
    if (it == by_id.end()) throw DataError("pseudo case '" + cases[i].clip_id + "' has no samples");
    const auto& samples = it->second->samples;
    cache[i][0] = score_clips(model, with_context(samples, cases[i].original_context),
                              scoring.batch_size);
    cache[i][1] = score_clips(model, with_context(samples, cases[i].altered_context),
                              scoring.batch_size);
  }
  const std::size_t t = model.config().frames;
  auto scorer = [&](AuxScore aux) {
    return [&, aux](std::size_t index, std::span<const double> context) {
      const auto& c = cases[index];
      const bool altered = !std::equal(context.begin(), context.end(),
                                       c.original_context.begin(), c.original_context.end());
      return video_timeline(cache[index][altered ? 1 : 0], t, aux, scoring.alpha, scoring.kernel)
          .anomaly;
    };
  };
  PseudoEvaluation out;
  out.combined = eval::run_pseudo_protocol(cases, scorer(AuxScore::kGlobal));
  out.motion_only = eval::run_pseudo_protocol(cases, scorer(AuxScore::kMotionOnly));
  out.recon_only = eval::run_pseudo_protocol(cases, scorer(AuxScore::kNone));
  return out;
}

TestEvaluation evaluate_test(const model::TrinityModel& model,
                             const std::vector<VideoSamples>& videos,
                             const ScoringOptions& scoring) {
  if (videos.empty()) throw DataError("no test videos to evaluate");
  const auto& config = model.config();
  const AuxScore aux =
      config.mode == model::Mode::kContextual ? AuxScore::kGlobal : AuxScore::kLocal;
  TestEvaluation out;
  std::vector<std::vector<double>> fused, recon;
  std::vector<std::vector<int>> labels;
  for (const auto& v : videos) {
    const ClipScores clips = score_clips(model, v.samples, scoring.batch_size);
    VideoEvaluation e;
    e.id = v.record->id;
    e.fused = video_timeline(clips, config.frames, aux, scoring.alpha, scoring.kernel,
                             v.record->labels);
    e.recon_only = video_timeline(clips, config.frames, AuxScore::kNone, 1.0, scoring.kernel,
                                  v.record->labels);
    fused.push_back(e.fused.anomaly);
    recon.push_back(e.recon_only.anomaly);
    labels.push_back(v.record->labels);
    out.videos.push_back(std::move(e));
  }
  out.fused = eval::pooled_auc(fused, labels);
  out.recon_only = eval::pooled_auc(recon, labels);
  return out;
}

ExperimentResult run_experiment(const PipelineConfig& config, const data::Dataset& dataset,
                                model::TrinityModel& model,
                                const std::function<void(const std::string&)>& log) {
  const auto start = std::chrono::steady_clock::now();
  auto say = [&](const std::string& m) {
    if (log) log(m);
  };
  config.validate();
  if (!(model.config() == config.model)) {
    throw ContractViolation("run_experiment: model was built from a different config");
  }
  ExperimentResult result;
  std::vector<ClipSample> train =
      flatten(prepare_split(dataset, "train", config.model, config.motion));
  say("prepared " + std::to_string(train.size()) + " training clips");
  auto pseudo = config.model.mode == model::Mode::kContextual
                    ? prepare_split(dataset, "pseudo", config.model, config.motion)
                    : std::vector<VideoSamples>{};
  auto test = prepare_split(dataset, "test", config.model, config.motion);
  if (config.model.toggles.vq) {
    vq::PretrainOptions vq_options = config.vq;
    vq_options.codebook_size = config.model.codebook_size;
    vq_options.seed = config.seed;
    result.codebook = pretrain_vq(train, vq_options);
    say("codebook: final loss " + fmt(result.codebook.epoch_loss.back()) + ", p99 distance " +
        fmt(result.codebook.distance_p99));
    assign_tokens(train, result.codebook.codebook);
    for (auto& v : pseudo) assign_tokens(v.samples, result.codebook.codebook);
    for (auto& v : test) assign_tokens(v.samples, result.codebook.codebook);
  }
  std::size_t logged_epoch = static_cast<std::size_t>(-1);
  result.training = train_model(model, train, config.train, config.seed,
                                [&](const StepRecord& s) {
                                  if (s.epoch != logged_epoch) {
                                    logged_epoch = s.epoch;
                                    say("epoch " + std::to_string(s.epoch) + " step " +
                                        std::to_string(s.step) + " loss " + fmt(s.total) +
                                        " tau " + fmt(s.tau));
                                  }
                                });
  say("trained in " + fmt(result.training.seconds) + " s");
  if (!pseudo.empty()) {
    result.pseudo = evaluate_pseudo(model, dataset, pseudo, config.scoring);
    say("pseudo AUC " + fmt(result.pseudo.combined.roc.auc) + ", AUC_mot " +
        fmt(result.pseudo.motion_only.roc.auc) + ", S_r only " +
        fmt(result.pseudo.recon_only.roc.auc));
  }
  if (!test.empty()) {
    result.test = evaluate_test(model, test, config.scoring);
    say("test AUC " + fmt(result.test.fused.roc.auc) + ", S_r only " +
        fmt(result.test.recon_only.roc.auc));
  }
  result.seconds = seconds_since(start);
  return result;
}

std::vector<AblationRow> run_ablation(const PipelineConfig& config, const data::Dataset& dataset,
                                      const std::vector<model::Toggles>& toggles,
                                      const std::function<void(const std::string&)>& log) {
  std::vector<AblationRow> rows;
  for (const auto& t : toggles) {
    t.validate();
    PipelineConfig c = config;
    c.model.mode = model::Mode::kContextual;
    c.model.toggles = t;
    c.data.test_videos = 0;
    if (log) log("ablation: " + t.label());
    model::TrinityModel m(c.model, c.seed);
    data::Dataset ds = dataset;
    std::erase_if(ds.clips, [](const data::ClipRecord& r) { return r.split == "test"; });
    const ExperimentResult r = run_experiment(c, ds, m, log);
    rows.push_back({t.label(), r.pseudo.motion_only.roc.auc, r.pseudo.combined.roc.auc});
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::string out = "configuration,AUC_mot,AUC\n";
  for (const auto& r : rows) out += r.configuration + "," + fmt(r.auc_mot) + "," + fmt(r.auc) + "\n";
  io::write_file_atomic(path, out);
}

void write_roc_csv(const std::filesystem::path& path, const eval::RocResult& roc) {
  std::string out = "fpr,tpr,threshold\n";
  for (const auto& p : roc.points) out += fmt(p.fpr) + "," + fmt(p.tpr) + "," + fmt(p.threshold) + "\n";
  io::write_file_atomic(path, out);
}

}  // namespace trinity::pipeline

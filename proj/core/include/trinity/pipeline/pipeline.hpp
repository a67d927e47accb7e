#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "trinity/data/dataset.hpp"
#include "trinity/data/pseudo.hpp"
#include "trinity/eval/protocol.hpp"
#include "trinity/infer/scores.hpp"
#include "trinity/model/trinity_model.hpp"
#include "trinity/pipeline/config.hpp"
#include "trinity/vq/codebook.hpp"

namespace trinity::pipeline {

/// One T-frame window ready for the model.
struct ClipSample {
  std::vector<double> frames;   // [T, H, W]
  std::vector<double> context;  // [Y]
  std::vector<double> hof;      // [N−1, 25], averaged over the window's pairs
  std::vector<std::size_t> q;   // filled by assign_tokens
  std::vector<std::size_t> err;
};

/// F−1 flow fields of a record: stored ground truth or TV-L1 output.
std::vector<flow::FlowField> record_flow(const data::ClipRecord& record, std::size_t height,
                                         std::size_t width, const MotionOptions& motion);

/// Stride-1 T-frame windows over a record (F−T+1 samples).
std::vector<ClipSample> make_samples(const data::ClipRecord& record, std::size_t height,
                                     std::size_t width, const model::ModelConfig& config,
                                     const MotionOptions& motion);

/// Row-major HOF features of every patch of every sample.
std::vector<double> collect_hof(std::span<const ClipSample> samples);

void assign_tokens(std::span<ClipSample> samples, const vq::Codebook& codebook);

model::Batch assemble_batch(std::span<const ClipSample* const> samples,
                            const model::ModelConfig& config);

struct StepRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  double total = 0.0;
  double recon = 0.0;
  std::vector<std::pair<std::string, double>> terms;
  double tau = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_loss;  // mean total per epoch
  double seconds = 0.0;
};

/// Adam + cosine schedule over shuffled mini-batches (a trailing batch of
/// one sample is dropped: the NCE terms need negatives).
TrainReport train_model(model::TrinityModel& model, std::span<const ClipSample> samples,
                        const TrainOptions& options, std::uint64_t seed,
                        const std::function<void(const StepRecord&)>& on_step = {});

/// step, epoch, total, L_recon, <terms...>, tau, lr
void write_loss_csv(const std::filesystem::path& path, const TrainReport& report);

/// Raw per-clip quantities from one no-grad pass.
struct ClipScores {
  std::vector<double> psnr;
  std::vector<double> cxt_mot;    // σ(cxt·mot/τ), contextual only
  std::vector<double> cxt_app;    // σ(cxt·app/τ), contextual only
  std::vector<double> misalign;   // raw S_l
};

ClipScores score_clips(const model::TrinityModel& model, std::span<const ClipSample> samples,
                       std::size_t batch_size = 16);

/// Which auxiliary score is fused with S_r.
enum class AuxScore { kGlobal, kMotionOnly, kLocal, kNone };

/// Per-frame timeline of a video from its clip scores.
infer::ScoreTimeline video_timeline(const ClipScores& clips, std::size_t clip_length,
                                    AuxScore aux, double alpha, std::size_t kernel,
                                    std::vector<int> labels = {});

/// frame_index, S_r, S_aux, S, anomaly, label
void write_score_csv(const std::filesystem::path& path, const infer::ScoreTimeline& timeline);

/// Loads the dataset split's records and prepares their samples.
struct VideoSamples {
  const data::ClipRecord* record = nullptr;
  std::vector<ClipSample> samples;
};
std::vector<VideoSamples> prepare_split(const data::Dataset& dataset, const std::string& split,
                                        const model::ModelConfig& config,
                                        const MotionOptions& motion);
std::vector<ClipSample> flatten(std::vector<VideoSamples>&& videos);

vq::PretrainResult pretrain_vq(std::span<const ClipSample> train, const vq::PretrainOptions& options);

struct PseudoEvaluation {
  eval::ProtocolResult combined;      // S_r fused with S_g
  eval::ProtocolResult motion_only;   // S_r fused with σ(cxt·mot/τ)
  eval::ProtocolResult recon_only;    // S_r alone
};
PseudoEvaluation evaluate_pseudo(const model::TrinityModel& model, const data::Dataset& dataset,
                                 const std::vector<VideoSamples>& videos,
                                 const ScoringOptions& scoring);

struct VideoEvaluation {
  std::string id;
  infer::ScoreTimeline fused;
  infer::ScoreTimeline recon_only;
};
struct TestEvaluation {
  eval::PooledResult fused;       // S_r with S_l (context-free) or S_g (contextual)
  eval::PooledResult recon_only;
  std::vector<VideoEvaluation> videos;
};
TestEvaluation evaluate_test(const model::TrinityModel& model,
                             const std::vector<VideoSamples>& videos,
                             const ScoringOptions& scoring);

/// Everything produced by one end-to-end run.
struct ExperimentResult {
  vq::PretrainResult codebook;
  TrainReport training;
  PseudoEvaluation pseudo;  // contextual mode only
  TestEvaluation test;
  double seconds = 0.0;
};

/// pretrain-vq → train → evaluate on an in-memory dataset. `model` must be
/// constructed from config.model.
ExperimentResult run_experiment(const PipelineConfig& config, const data::Dataset& dataset,
                                model::TrinityModel& model,
                                const std::function<void(const std::string&)>& log = {});

struct AblationRow {
  std::string configuration;
  double auc_mot = 0.0;
  double auc = 0.0;
};
/// One contextual experiment per toggle set, on the same dataset and seed.
std::vector<AblationRow> run_ablation(const PipelineConfig& config, const data::Dataset& dataset,
                                      const std::vector<model::Toggles>& toggles,
                                      const std::function<void(const std::string&)>& log = {});
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

/// fpr, tpr, threshold
void write_roc_csv(const std::filesystem::path& path, const eval::RocResult& roc);

}  // namespace trinity::pipeline

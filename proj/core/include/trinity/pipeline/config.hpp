#pragma once

#include <cstdint>
#include <filesystem>

#include "trinity/align/losses.hpp"
#include "trinity/data/dataset.hpp"
#include "trinity/flow/flow.hpp"
#include "trinity/kv_document.hpp"
#include "trinity/model/config.hpp"
#include "trinity/vq/codebook.hpp"

namespace trinity::pipeline {

struct MotionOptions {
  bool use_gt_flow = false;          // stored ground truth instead of the solver
  double magnitude_threshold = 0.5;  // px/frame below which a pixel is background
  flow::SolverConfig solver;
};

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double learning_rate = 2e-4;
  double min_learning_rate = 0.0;
  double max_grad_norm = 0.0;
  align::LossWeights weights;
};

struct ScoringOptions {
  double alpha = 0.3;   // weight of S_r
  std::size_t kernel = 17;
  std::size_t batch_size = 16;
};

/// Everything a run needs. Serialized as a "trinity-config 1" document.
struct PipelineConfig {
  data::DatasetSpec data;
  model::ModelConfig model;
  MotionOptions motion;
  vq::PretrainOptions vq;
  TrainOptions train;
  ScoringOptions scoring;
  std::uint64_t seed = 42;

  /// α default for a mode: 0.3 contextual, 0.7 context-free.
  static double default_alpha(model::Mode mode);
  void validate() const;
  KvDocument to_document() const;
  static PipelineConfig from_document(const KvDocument& doc);
  static PipelineConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

}  // namespace trinity::pipeline

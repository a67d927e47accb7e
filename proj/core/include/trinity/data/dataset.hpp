#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trinity/data/world.hpp"
#include "trinity/model/config.hpp"

namespace trinity::data {

/// One stored video: frames, optional flow, context and per-frame labels.
/// Training records are single T-frame clips; evaluation records are longer
/// videos scored with sliding clips.
struct ClipRecord {
  std::string id;
  std::string split;  // "train", "pseudo", "test", or anything user-defined
  AnomalyKind kind = AnomalyKind::kNone;
  std::optional<Moment> moment;
  std::vector<double> context;
  // Pseudo-context protocol: the deliberately wrong context.
  std::optional<Moment> altered_moment;
  std::vector<double> altered_context;
  std::string intent;
  std::string timestamp;  // free-form source time, if known
  std::vector<int> labels;
  std::size_t frames = 0;
  std::vector<double> pixels;  // [frames, H, W]
  std::vector<flow::FlowField> flow;  // empty or frames − 1

  flow::Image frame(std::size_t t, std::size_t height, std::size_t width) const;
};

struct Dataset {
  std::size_t height = 0;
  std::size_t width = 0;
  model::ContextLayout layout;
  std::uint64_t seed = 0;
  std::vector<ClipRecord> clips;

  std::vector<const ClipRecord*> split(const std::string& name) const;
  void validate() const;
};

ClipRecord to_record(const Video& video, std::string id, std::string split);

// Directory layout:
//   manifest.txt          "trinity-dataset 1" key = value document
//   clips/<id>.frames     "TRNYFRMS" | u32 version | u32 F | u32 H | u32 W | f32 pixels
//   clips/<id>.flow       flow cache format (optional)
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

std::string encode_frames(const ClipRecord& clip, std::size_t height, std::size_t width);
/// Returns {frames, pixels}.
std::pair<std::size_t, std::vector<double>> decode_frames(std::string bytes, std::size_t height,
                                                          std::size_t width,
                                                          const std::string& label);

struct DatasetSpec {
  WorldConfig world;
  model::ContextLayout layout;
  std::size_t train_clips = 480;
  std::size_t clip_frames = 4;
  std::size_t pseudo_cases = 20;
  std::size_t pseudo_frames = 24;
  std::size_t test_videos = 20;
  std::size_t test_frames = 40;
  std::size_t anomaly_length = 14;
  AnomalyKind test_kind = AnomalyKind::kUnseenMotion;
  std::uint64_t seed = 42;

  void write(KvDocument& doc) const;
  static DatasetSpec read(const KvDocument& doc);
};

/// Seeded synthetic dataset: normal training clips, normal videos for the
/// pseudo-context protocol (one per alteration rule), and test videos with
/// an injected anomaly window.
Dataset generate_dataset(const DatasetSpec& spec);

/// Builds a dataset from `<root>/<clip>/*.pgm` frame directories and a
/// context CSV with columns clip,timestamp,hour,day,game_flag,game_hour.
/// Every `gap`-th frame is kept.
Dataset ingest_frames(const std::filesystem::path& root, const std::filesystem::path& csv,
                      const model::ContextLayout& layout, std::size_t gap,
                      const std::string& split = "train");

/// Reads a binary (P5) or ASCII (P2) PGM, mapping [0, maxval] to [-1, 1].
flow::Image read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const flow::Image& image);

}  // namespace trinity::data

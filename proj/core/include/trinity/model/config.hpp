#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "trinity/kv_document.hpp"

namespace trinity::model {

enum class Mode { kContextual, kContextFree };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

/// Named one-hot segments that make up a context vector, in order.
struct ContextSegment {
  std::string name;
  std::size_t width = 0;

  friend bool operator==(const ContextSegment&, const ContextSegment&) = default;
};

struct ContextLayout {
  // hour-of-day, day-of-week, game flag (off/on), game start hour (0 = none)
  std::vector<ContextSegment> segments{
      {"hour", 24}, {"day", 7}, {"game_flag", 2}, {"game_hour", 24}};

  std::size_t dimension() const;
  std::size_t offset(const std::string& segment) const;
  const ContextSegment& segment(const std::string& name) const;
  /// "hour:24,day:7,..."
  std::string to_string() const;
  static ContextLayout parse(const std::string& text);

  friend bool operator==(const ContextLayout&, const ContextLayout&) = default;
};

/// Ablation switches: global alignment, vector quantization, batch-wise and
/// patch-wise local alignment.
struct Toggles {
  bool global = true;
  bool vq = true;
  bool local_batch = true;
  bool local_patch = true;

  /// Throws ConfigError for local terms without global alignment.
  void validate() const;
  /// e.g. "GA+VQ+LB+LP"
  std::string label() const;
  static Toggles parse(const std::string& label);

  friend bool operator==(const Toggles&, const Toggles&) = default;
};

struct ModelConfig {
  Mode mode = Mode::kContextual;
  std::size_t frames = 4;          // T: T-1 inputs, frame T predicted
  std::size_t image_height = 64;
  std::size_t image_width = 64;
  std::size_t patch = 16;          // k
  std::size_t dim = 64;            // D
  std::size_t context_dim = 64;    // d_t
  std::size_t position_dim = 64;   // d_p
  std::size_t tscab_blocks = 2;
  std::size_t motion_blocks = 3;   // k_mot
  std::size_t appearance_blocks = 3;  // k_app
  std::size_t heads = 8;
  std::size_t ffn_hidden = 128;
  std::size_t codebook_size = 64;
  std::vector<std::size_t> unet_channels{4, 8, 16, 32};
  double initial_temperature = 0.07;
  ContextLayout context;
  Toggles toggles;

  std::size_t grid_rows() const { return image_height / patch; }
  std::size_t grid_cols() const { return image_width / patch; }
  std::size_t local_tokens() const { return grid_rows() * grid_cols(); }
  /// N = H·W/k² + 1
  std::size_t tokens() const { return local_tokens() + 1; }

  void validate() const;

  /// Full-scale constants (256×256 frames, D = 512, 128-dim context).
  static ModelConfig large();

  void write(KvDocument& doc) const;
  static ModelConfig read(const KvDocument& doc);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace trinity::model

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "trinity/flow/flow.hpp"
#include "trinity/model/config.hpp"

namespace trinity::data {

/// Calendar position of a clip plus the game scheduled that day
/// (game_hour 0 means no game).
struct Moment {
  int day = 0;     // 0 = Monday
  int hour = 0;
  int minute = 0;
  int game_hour = 0;

  /// "day=4,hour=10,minute=0,game_hour=14"
  std::string to_string() const;
  static Moment parse(const std::string& text);

  friend bool operator==(const Moment&, const Moment&) = default;
};

/// On from two hours before to three hours after game start, inclusive.
bool game_flag(const Moment& moment);

/// One-hot encoding of (hour, day, game flag, game hour) in the order of
/// `layout`. Known segment names: hour (24), day (7), game_flag (1 or 2),
/// game_hour (24, slot 0 = no game).
std::vector<double> encode_fields(int hour, int day, bool flag, int game_hour,
                                  const model::ContextLayout& layout);
std::vector<double> encode_context(const Moment& moment, const model::ContextLayout& layout);

enum class AnomalyKind { kNone, kPresence, kAbsence, kCounterFlow, kSpeed, kUnseenMotion };

std::string to_string(AnomalyKind kind);
AnomalyKind parse_anomaly_kind(const std::string& text);

/// What a context looks like: expected on-screen agent count, dominant
/// direction (unit vector, image y points down), speed in px/frame, and
/// whether the game-day boards are up.
struct Behaviour {
  double count = 0.0;
  double dir_x = 0.0;
  double dir_y = 0.0;
  double speed = 0.0;
  bool boards = false;
};

/// The synthetic webcam world: scene constants plus the context schedule.
struct WorldConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  double background = -0.6;
  double board_value = 0.5;
  double blob_sigma = 2.0;
  double blob_amplitude = 1.4;
  double speed = 2.0;
  double speed_jitter = 0.15;
  double crowd_count = 6.0;
  double commute_count = 3.0;
  double sparse_count = 1.0;
  double quiet_count = 0.3;
  double anomaly_speed_factor = 3.0;
  double game_probability = 0.5;
  std::vector<int> game_hours{14, 19};
  // On game days, chance that a sampled hour falls inside the event window.
  double event_focus = 0.5;
  // Sensor noise standard deviation drifts smoothly between these bounds.
  double noise_min = 0.02;
  double noise_max = 0.10;
  double noise_period = 40.0;  // frames

  Behaviour behaviour(const Moment& moment) const;
  void validate() const;
  void write(KvDocument& doc) const;
  static WorldConfig read(const KvDocument& doc);
};

/// Frames [start, end) of a video show `kind`.
struct AnomalySpec {
  AnomalyKind kind = AnomalyKind::kNone;
  std::size_t start = 0;
  std::size_t end = 0;
};

struct Video {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;          // [frames, H, W], float32-representable
  std::vector<flow::FlowField> flow;   // frames − 1 ground-truth fields
  Moment moment;
  std::vector<double> context;
  std::vector<int> labels;             // per frame
  AnomalyKind kind = AnomalyKind::kNone;
  std::size_t agents_on_screen = 0;    // agent centres inside frame 0

  flow::Image frame(std::size_t t) const;
};

/// Renders a deterministic video of Gaussian-blob agents. Velocity
/// anomalies (counter_flow, speed, unseen_motion) change every agent's
/// velocity inside the anomaly window; presence adds a crowd and absence
/// hides everyone there.
Video generate_video(const WorldConfig& world, const Moment& moment, std::size_t frames,
                     std::uint64_t seed, const AnomalySpec& anomaly = {},
                     const model::ContextLayout& layout = {});

/// A T-frame clip whose frames all carry `kind`.
Video generate_clip(const WorldConfig& world, const Moment& moment, AnomalyKind kind,
                    std::uint64_t seed, std::size_t frames = 4,
                    const model::ContextLayout& layout = {});

/// Random training moment: uniform day, a game with `game_probability` at one
/// of `game_hours`. Hours are uniform, except that game days draw from the
/// flagged window [g-2, g+3] with probability `event_focus`.
Moment sample_moment(const WorldConfig& world, std::uint64_t seed);

}  // namespace trinity::data

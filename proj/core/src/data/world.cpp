#include "trinity/data/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "trinity/error.hpp"

namespace trinity::data {

std::string Moment::to_string() const {
  return "day=" + std::to_string(day) + ",hour=" + std::to_string(hour) +
         ",minute=" + std::to_string(minute) + ",game_hour=" + std::to_string(game_hour);
}

Moment Moment::parse(const std::string& text) {
  Moment m;
  std::istringstream in(text);
  std::string item;
  int seen = 0;
  while (std::getline(in, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw FormatError("moment '" + text + "': bad field '" + item + "'");
    const std::string key = item.substr(0, eq);
    int value = 0;
    try {
      value = std::stoi(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw FormatError("moment '" + text + "': bad value in '" + item + "'");
    }
    if (key == "day") m.day = value;
    else if (key == "hour") m.hour = value;
    else if (key == "minute") m.minute = value;
    else if (key == "game_hour") m.game_hour = value;
    else throw FormatError("moment '" + text + "': unknown field '" + key + "'");
    ++seen;
  }
  if (seen != 4) throw FormatError("moment '" + text + "': expected 4 fields");
  if (m.day < 0 || m.day > 6 || m.hour < 0 || m.hour > 23 || m.minute < 0 ||
      m.minute > 59 || m.game_hour < 0 || m.game_hour > 23) {
    throw FormatError("moment '" + text + "' out of range");
  }
  return m;
}

bool game_flag(const Moment& m) {
  if (m.game_hour == 0) return false;
  const int offset = (m.hour * 60 + m.minute) - m.game_hour * 60;
  return offset >= -120 && offset <= 180;
}

std::vector<double> encode_fields(int hour, int day, bool flag, int game_hour,
                                  const model::ContextLayout& layout) {
  std::vector<double> out(layout.dimension(), 0.0);
  std::size_t off = 0;
  auto set = [&](const model::ContextSegment& s, int index) {
    if (index < 0 || static_cast<std::size_t>(index) >= s.width) {
      throw ConfigError("context segment '" + s.name + "' (width " + std::to_string(s.width) +
                        ") cannot encode value " + std::to_string(index));
    }
    out[off + static_cast<std::size_t>(index)] = 1.0;
  };
  for (const auto& s : layout.segments) {
    if (s.name == "hour") {
      set(s, hour);
    } else if (s.name == "day") {
      set(s, day);
    } else if (s.name == "game_flag") {
      if (s.width == 1) {
        out[off] = flag ? 1.0 : 0.0;
      } else {
        set(s, flag ? 1 : 0);
      }
    } else if (s.name == "game_hour") {
      set(s, game_hour);
    } else {
      throw ConfigError("unknown context segment '" + s.name + "'");
    }
    off += s.width;
  }
  return out;
}

std::vector<double> encode_context(const Moment& m, const model::ContextLayout& layout) {
  return encode_fields(m.hour, m.day, game_flag(m), m.game_hour, layout);
}

std::string to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::kNone: return "none";
    case AnomalyKind::kPresence: return "presence";
    case AnomalyKind::kAbsence: return "absence";
    case AnomalyKind::kCounterFlow: return "counter_flow";
    case AnomalyKind::kSpeed: return "speed";
    case AnomalyKind::kUnseenMotion: return "unseen_motion";
  }
  return "none";
}

AnomalyKind parse_anomaly_kind(const std::string& text) {
  for (auto k : {AnomalyKind::kNone, AnomalyKind::kPresence, AnomalyKind::kAbsence,
                 AnomalyKind::kCounterFlow, AnomalyKind::kSpeed, AnomalyKind::kUnseenMotion}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown anomaly kind '" + text + "'");
}

Behaviour WorldConfig::behaviour(const Moment& m) const {
  Behaviour b;
  const int g = m.game_hour, h = m.hour;
  b.speed = speed;
  b.boards = g > 0 && h >= g - 5 && h <= g + 3;
  if (g > 0 && h >= g - 2 && h <= g) {
    b.count = crowd_count;  // arriving for the game
    b.dir_y = -1.0;
  } else if (g > 0 && h == g + 1) {
    b.count = quiet_count;
    b.dir_x = 1.0;
  } else if (g > 0 && h >= g + 2 && h <= g + 3) {
    b.count = crowd_count;  // leaving
    b.dir_y = 1.0;
  } else if (h < 6) {
    b.count = 0.0;
    b.dir_x = 1.0;
  } else if (h < 12) {
    b.count = commute_count;
    b.dir_x = 1.0;
  } else if (h < 17) {
    b.count = sparse_count;
    b.dir_x = 1.0;
  } else if (h < 22) {
    b.count = commute_count;
    b.dir_x = -1.0;
  } else {
    b.count = sparse_count;
    b.dir_x = -1.0;
  }
  return b;
}

void WorldConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("world config: " + m); };
  if (height == 0 || width == 0) fail("empty frame size");
  if (!(blob_sigma > 0.0)) fail("blob_sigma must be positive");
  if (!(speed > 0.0)) fail("speed must be positive");
  if (speed_jitter < 0.0 || speed_jitter >= 1.0) fail("speed_jitter must lie in [0, 1)");
  if (crowd_count < 0 || commute_count < 0 || sparse_count < 0 || quiet_count < 0) {
    fail("expected counts must be nonnegative");
  }
  if (game_probability < 0.0 || game_probability > 1.0) fail("game_probability must lie in [0, 1]");
  for (int g : game_hours) {
    if (g < 1 || g > 23) fail("game hours must lie in [1, 23]");
  }
  if (game_probability > 0.0 && game_hours.empty()) fail("no game hours");
  if (event_focus < 0.0 || event_focus > 1.0) fail("event_focus must lie in [0, 1]");
  if (noise_min < 0.0 || noise_max < noise_min) fail("need 0 <= noise_min <= noise_max");
  if (!(noise_period > 0.0)) fail("noise_period must be positive");
}

void WorldConfig::write(KvDocument& doc) const {
  doc.set("world.height", static_cast<std::uint64_t>(height));
  doc.set("world.width", static_cast<std::uint64_t>(width));
  doc.set("world.background", background);
  doc.set("world.board_value", board_value);
  doc.set("world.blob_sigma", blob_sigma);
  doc.set("world.blob_amplitude", blob_amplitude);
  doc.set("world.speed", speed);
  doc.set("world.speed_jitter", speed_jitter);
  doc.set("world.crowd_count", crowd_count);
  doc.set("world.commute_count", commute_count);
  doc.set("world.sparse_count", sparse_count);
  doc.set("world.quiet_count", quiet_count);
  doc.set("world.anomaly_speed_factor", anomaly_speed_factor);
  doc.set("world.game_probability", game_probability);
  std::string gh;
  for (int g : game_hours) gh += (gh.empty() ? "" : ",") + std::to_string(g);
  doc.set("world.game_hours", gh);
  doc.set("world.event_focus", event_focus);
  doc.set("world.noise_min", noise_min);
  doc.set("world.noise_max", noise_max);
  doc.set("world.noise_period", noise_period);
}

WorldConfig WorldConfig::read(const KvDocument& doc) {
  WorldConfig w;
  w.height = doc.get_uint_or("world.height", w.height);
  w.width = doc.get_uint_or("world.width", w.width);
  w.background = doc.get_double_or("world.background", w.background);
  w.board_value = doc.get_double_or("world.board_value", w.board_value);
  w.blob_sigma = doc.get_double_or("world.blob_sigma", w.blob_sigma);
  w.blob_amplitude = doc.get_double_or("world.blob_amplitude", w.blob_amplitude);
  w.speed = doc.get_double_or("world.speed", w.speed);
  w.speed_jitter = doc.get_double_or("world.speed_jitter", w.speed_jitter);
  w.crowd_count = doc.get_double_or("world.crowd_count", w.crowd_count);
  w.commute_count = doc.get_double_or("world.commute_count", w.commute_count);
  w.sparse_count = doc.get_double_or("world.sparse_count", w.sparse_count);
  w.quiet_count = doc.get_double_or("world.quiet_count", w.quiet_count);
  w.anomaly_speed_factor = doc.get_double_or("world.anomaly_speed_factor", w.anomaly_speed_factor);
  w.game_probability = doc.get_double_or("world.game_probability", w.game_probability);
  if (doc.has("world.game_hours")) {
    w.game_hours.clear();
    std::istringstream in(doc.get("world.game_hours"));
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        w.game_hours.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw ConfigError("world.game_hours: bad entry '" + item + "'");
      }
    }
  }
  w.event_focus = doc.get_double_or("world.event_focus", w.event_focus);
  w.noise_min = doc.get_double_or("world.noise_min", w.noise_min);
  w.noise_max = doc.get_double_or("world.noise_max", w.noise_max);
  w.noise_period = doc.get_double_or("world.noise_period", w.noise_period);
  w.validate();
  return w;
}

flow::Image Video::frame(std::size_t t) const {
  if (t >= frames) throw ContractViolation("frame index out of range");
  flow::Image img(height, width);
  std::copy_n(pixels.begin() + static_cast<long>(t * height * width), height * width,
              img.pixels.begin());
  return img;
}

namespace {

struct Agent {
  double x0 = 0.0, y0 = 0.0;
  double vx = 0.0, vy = 0.0;    // normal velocity
  double ax = 0.0, ay = 0.0;    // velocity inside the anomaly window
  bool anomaly_only = false;    // presence crowd
};

constexpr double kSupport = 2.0;  // flow support radius in blob sigmas

bool in_window(const AnomalySpec& a, std::size_t t) {
  return a.kind != AnomalyKind::kNone && t >= a.start && t < a.end;
}

}  // namespace

Video generate_video(const WorldConfig& world, const Moment& moment, std::size_t frames,
                     std::uint64_t seed, const AnomalySpec& anomaly,
                     const model::ContextLayout& layout) {
  world.validate();
  if (frames < 2) throw ConfigError("generate_video: need at least 2 frames");
  if (anomaly.kind != AnomalyKind::kNone &&
      (anomaly.start >= anomaly.end || anomaly.end > frames)) {
    throw ConfigError("generate_video: anomaly window [" + std::to_string(anomaly.start) + ", " +
                      std::to_string(anomaly.end) + ") invalid for " + std::to_string(frames) +
                      " frames");
  }
  std::mt19937_64 rng(seed);
  const Behaviour b = world.behaviour(moment);
  const std::size_t h = world.height, w = world.width;
  const double W = static_cast<double>(w), H = static_cast<double>(h);

  Video v;
  v.frames = frames;
  v.height = h;
  v.width = w;
  v.moment = moment;
  v.context = encode_context(moment, layout);
  v.kind = anomaly.kind;
  v.labels.assign(frames, 0);
  for (std::size_t t = 0; t < frames; ++t) v.labels[t] = in_window(anomaly, t) ? 1 : 0;

  const bool velocity_anomaly = anomaly.kind == AnomalyKind::kCounterFlow ||
                                anomaly.kind == AnomalyKind::kSpeed ||
                                anomaly.kind == AnomalyKind::kUnseenMotion;
  // Velocity anomalies need someone to move.
  double count = b.count;
  if (velocity_anomaly) count = std::max(count, world.commute_count);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(1.0 - world.speed_jitter, 1.0 + world.speed_jitter);
  const double margin = 3.0 * world.blob_sigma;
  const double travel = world.speed * (1.0 + world.speed_jitter) * static_cast<double>(frames) *
                        (velocity_anomaly ? world.anomaly_speed_factor : 1.0);

  // Spawn over the screen extended upstream by the distance travelled, so
  // on-screen density stays at `count` for the whole video.
  auto spawn = [&](double expected, double dx, double dy, bool anomaly_only,
                   std::vector<Agent>& out) {
    const bool horizontal = std::abs(dx) >= std::abs(dy);
    const double extent = horizontal ? W : H;
    const double span = extent + 2.0 * margin + travel;
    std::poisson_distribution<int> pois(expected * span / extent);
    const int n = expected > 0.0 ? pois(rng) : 0;
    for (int i = 0; i < n; ++i) {
      Agent a;
      const double along = -margin - travel + unit(rng) * span;
      const double across = unit(rng) * (horizontal ? H : W);
      const double dir = horizontal ? dx : dy;
      const double pos = dir >= 0.0 ? along : extent - along;
      if (horizontal) {
        a.x0 = pos;
        a.y0 = across;
      } else {
        a.x0 = across;
        a.y0 = pos;
      }
      const double s = world.speed * jitter(rng);
      a.vx = dx * s;
      a.vy = dy * s;
      a.ax = a.vx;
      a.ay = a.vy;
      a.anomaly_only = anomaly_only;
      out.push_back(a);
    }
  };

  std::vector<Agent> agents;
  spawn(count, b.dir_x, b.dir_y, false, agents);
  if (anomaly.kind == AnomalyKind::kPresence) {
    const double dx = (b.dir_x == 0.0 && b.dir_y == 0.0) ? 1.0 : b.dir_x;
    spawn(world.crowd_count, dx, b.dir_y, true, agents);
  }
  for (auto& a : agents) {
    switch (anomaly.kind) {
      case AnomalyKind::kCounterFlow:
        a.ax = -a.vx;
        a.ay = -a.vy;
        break;
      case AnomalyKind::kSpeed:
        a.ax = a.vx * world.anomaly_speed_factor;
        a.ay = a.vy * world.anomaly_speed_factor;
        break;
      case AnomalyKind::kUnseenMotion: {
        // Oblique headings, never produced by any context.
        static constexpr double kAngles[] = {60.0, 120.0, 240.0, 300.0};
        const double ang = kAngles[std::uniform_int_distribution<int>(0, 3)(rng)] *
                           std::numbers::pi / 180.0;
        const double s = std::hypot(a.vx, a.vy);
        a.ax = s * std::cos(ang);
        a.ay = s * std::sin(ang);
        break;
      }
      default:
        break;
    }
  }

  // Positions per frame: integrate the piecewise velocity.
  const std::size_t n = agents.size();
  std::vector<double> px(n * frames), py(n * frames);
  std::vector<char> visible(n * frames);
  for (std::size_t i = 0; i < n; ++i) {
    double x = agents[i].x0, y = agents[i].y0;
    for (std::size_t t = 0; t < frames; ++t) {
      px[i * frames + t] = x;
      py[i * frames + t] = y;
      const bool inside = in_window(anomaly, t);
      bool vis = true;
      if (agents[i].anomaly_only) vis = inside;
      if (anomaly.kind == AnomalyKind::kAbsence && inside) vis = false;
      visible[i * frames + t] = vis;
      const bool moving_anomalous = velocity_anomaly && inside;
      x += moving_anomalous ? agents[i].ax : agents[i].vx;
      y += moving_anomalous ? agents[i].ay : agents[i].vy;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (visible[i * frames] && px[i * frames] >= 0.0 && px[i * frames] < W &&
        py[i * frames] >= 0.0 && py[i * frames] < H) {
      ++v.agents_on_screen;
    }
  }

  // Render.
  const double phase = unit(rng) * 2.0 * std::numbers::pi;
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double inv2s2 = 1.0 / (2.0 * world.blob_sigma * world.blob_sigma);
  const double reach = 4.0 * world.blob_sigma;
  v.pixels.assign(frames * h * w, 0.0);
  v.flow.assign(frames - 1, flow::FlowField(h, w));
  std::vector<double> best(h * w);
  for (std::size_t t = 0; t < frames; ++t) {
    double* img = v.pixels.data() + t * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double base = world.background;
        // Game-day boards: two static panels across the top.
        if (b.boards && y >= 2 && y < 10 && ((x >= 2 && x < 22) || (x + 22 >= w && x + 2 < w))) {
          base = world.board_value;
        }
        img[y * w + x] = base;
      }
    }
    std::fill(best.begin(), best.end(), 0.0);
    flow::FlowField* f = t + 1 < frames ? &v.flow[t] : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      if (!visible[i * frames + t]) continue;
      const double cx = px[i * frames + t], cy = py[i * frames + t];
      const long x0 = std::max(0L, static_cast<long>(std::floor(cx - reach)));
      const long x1 = std::min(static_cast<long>(w) - 1, static_cast<long>(std::ceil(cx + reach)));
      const long y0 = std::max(0L, static_cast<long>(std::floor(cy - reach)));
      const long y1 = std::min(static_cast<long>(h) - 1, static_cast<long>(std::ceil(cy + reach)));
      const double du = f ? px[i * frames + t + 1] - cx : 0.0;
      const double dv = f ? py[i * frames + t + 1] - cy : 0.0;
      const bool next_visible = f && visible[i * frames + t + 1];
      for (long y = y0; y <= y1; ++y) {
        for (long x = x0; x <= x1; ++x) {
          const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          const double g = std::exp(-d2 * inv2s2);
          const std::size_t idx = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
          img[idx] += world.blob_amplitude * g;
          if (f && next_visible && d2 <= kSupport * kSupport * world.blob_sigma * world.blob_sigma &&
              g > best[idx]) {
            best[idx] = g;
            f->u[idx] = du;
            f->v[idx] = dv;
          }
        }
      }
    }
    const double sd = world.noise_min + (world.noise_max - world.noise_min) *
                                            (0.5 + 0.5 * std::sin(phase + 2.0 * std::numbers::pi *
                                                                              static_cast<double>(t) /
                                                                              world.noise_period));
    for (std::size_t i = 0; i < h * w; ++i) {
      const double val = std::clamp(img[i] + sd * gauss(rng), -1.0, 1.0);
      img[i] = static_cast<double>(static_cast<float>(val));
    }
  }
  for (auto& f : v.flow) {
    for (auto& x : f.u) x = static_cast<double>(static_cast<float>(x));
    for (auto& x : f.v) x = static_cast<double>(static_cast<float>(x));
  }
  return v;
}

Video generate_clip(const WorldConfig& world, const Moment& moment, AnomalyKind kind,
                    std::uint64_t seed, std::size_t frames, const model::ContextLayout& layout) {
  AnomalySpec spec;
  spec.kind = kind;
  spec.start = 0;
  spec.end = kind == AnomalyKind::kNone ? 0 : frames;
  return generate_video(world, moment, frames, seed, spec, layout);
}

Moment sample_moment(const WorldConfig& world, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Moment m;
  m.day = std::uniform_int_distribution<int>(0, 6)(rng);
  m.hour = std::uniform_int_distribution<int>(0, 23)(rng);
  if (!world.game_hours.empty() && std::bernoulli_distribution(world.game_probability)(rng)) {
    const auto k = std::uniform_int_distribution<std::size_t>(0, world.game_hours.size() - 1)(rng);
    m.game_hour = world.game_hours[k];
    if (std::bernoulli_distribution(world.event_focus)(rng)) {
      m.hour = std::clamp(m.game_hour + std::uniform_int_distribution<int>(-2, 3)(rng), 0, 23);
    }
  }
  return m;
}

}  // namespace trinity::data

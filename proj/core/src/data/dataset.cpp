#include "trinity/data/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "trinity/binary_io.hpp"
#include "trinity/data/pseudo.hpp"
#include "trinity/error.hpp"
#include "trinity/kv_document.hpp"

namespace trinity::data {

namespace {

constexpr std::string_view kFramesMagic{"TRNYFRMS", 8};
constexpr std::uint32_t kFramesVersion = 1;
constexpr char kManifestKind[] = "trinity-dataset";
constexpr std::uint32_t kManifestVersion = 1;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  std::uint64_t out[1];
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out[0];
}

std::string bits_to_string(const std::vector<double>& bits) {
  std::string s;
  for (double b : bits) s += b != 0.0 ? '1' : '0';
  return s;
}

std::vector<double> string_to_bits(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (char c : s) {
    if (c != '0' && c != '1') throw FormatError(what + ": expected a 0/1 string");
    out.push_back(c == '1' ? 1.0 : 0.0);
  }
  return out;
}

std::string labels_to_string(const std::vector<int>& labels) {
  std::string s;
  for (int l : labels) s += l ? '1' : '0';
  return s;
}

std::string key(std::size_t i, const char* field) {
  return "clip." + std::to_string(i) + "." + field;
}

}  // namespace

flow::Image ClipRecord::frame(std::size_t t, std::size_t height, std::size_t width) const {
  if (t >= frames) throw ContractViolation("frame index out of range");
  flow::Image img(height, width);
  std::copy_n(pixels.begin() + static_cast<long>(t * height * width), height * width,
              img.pixels.begin());
  return img;
}

std::vector<const ClipRecord*> Dataset::split(const std::string& name) const {
  std::vector<const ClipRecord*> out;
  for (const auto& c : clips) {
    if (c.split == name) out.push_back(&c);
  }
  return out;
}

void Dataset::validate() const {
  const std::size_t y = layout.dimension();
  std::map<std::string, int> ids;
  for (const auto& c : clips) {
    const std::string where = "clip '" + c.id + "'";
    if (c.id.empty() || c.id.find_first_of("/\\ \n") != std::string::npos) {
      throw DataError(where + ": ids must be non-empty without separators or spaces");
    }
    if (ids[c.id]++) throw DataError(where + ": duplicate id");
    if (c.frames == 0 || c.pixels.size() != c.frames * height * width) {
      throw DataError(where + ": pixel buffer does not match frame count and size");
    }
    if (c.labels.size() != c.frames) throw DataError(where + ": one label per frame required");
    if (c.context.size() != y) throw DataError(where + ": context width differs from layout");
    if (!c.altered_context.empty() && c.altered_context.size() != y) {
      throw DataError(where + ": altered context width differs from layout");
    }
    if (!c.flow.empty() && c.flow.size() + 1 != c.frames) {
      throw DataError(where + ": flow needs frames - 1 fields");
    }
  }
}

ClipRecord to_record(const Video& v, std::string id, std::string split) {
  ClipRecord r;
  r.id = std::move(id);
  r.split = std::move(split);
  r.kind = v.kind;
  r.moment = v.moment;
  r.context = v.context;
  r.labels = v.labels;
  r.frames = v.frames;
  r.pixels = v.pixels;
  r.flow = v.flow;
  return r;
}

std::string encode_frames(const ClipRecord& clip, std::size_t height, std::size_t width) {
  if (clip.pixels.size() != clip.frames * height * width) {
    throw ContractViolation("encode_frames: pixel count mismatch for '" + clip.id + "'");
  }
  io::ByteWriter w;
  w.bytes(kFramesMagic);
  w.u32(kFramesVersion);
  w.u32(static_cast<std::uint32_t>(clip.frames));
  w.u32(static_cast<std::uint32_t>(height));
  w.u32(static_cast<std::uint32_t>(width));
  for (double p : clip.pixels) w.f32(static_cast<float>(p));
  return w.buffer();
}

std::pair<std::size_t, std::vector<double>> decode_frames(std::string bytes, std::size_t height,
                                                          std::size_t width,
                                                          const std::string& label) {
  io::ByteReader r(std::move(bytes), label);
  r.expect_magic(kFramesMagic);
  const std::uint32_t version = r.u32();
  if (version != kFramesVersion) r.fail("unsupported frame file version " + std::to_string(version));
  const std::uint32_t f = r.u32(), h = r.u32(), w = r.u32();
  if (h != height || w != width) {
    r.fail("frame size " + std::to_string(h) + "x" + std::to_string(w) + " differs from manifest " +
           std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t need = std::size_t{f} * h * w * 4;
  if (r.remaining() != need) {
    r.fail("payload size " + std::to_string(r.remaining()) + " != expected " + std::to_string(need));
  }
  std::vector<double> pixels(std::size_t{f} * h * w);
  for (double& p : pixels) p = r.f32();
  return {f, std::move(pixels)};
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  ds.validate();
  std::filesystem::create_directories(dir / "clips");
  KvDocument doc(kManifestKind, kManifestVersion);
  doc.set("dataset.height", static_cast<std::uint64_t>(ds.height));
  doc.set("dataset.width", static_cast<std::uint64_t>(ds.width));
  doc.set("dataset.context_layout", ds.layout.to_string());
  doc.set("dataset.seed", ds.seed);
  doc.set("dataset.clips", static_cast<std::uint64_t>(ds.clips.size()));
  for (std::size_t i = 0; i < ds.clips.size(); ++i) {
    const auto& c = ds.clips[i];
    doc.set(key(i, "id"), c.id);
    doc.set(key(i, "split"), c.split);
    doc.set(key(i, "kind"), to_string(c.kind));
    doc.set(key(i, "moment"), c.moment ? c.moment->to_string() : std::string("-"));
    doc.set(key(i, "context"), bits_to_string(c.context));
    doc.set(key(i, "altered_moment"),
            c.altered_moment ? c.altered_moment->to_string() : std::string("-"));
    doc.set(key(i, "altered_context"),
            c.altered_context.empty() ? std::string("-") : bits_to_string(c.altered_context));
    doc.set(key(i, "intent"), c.intent.empty() ? std::string("-") : c.intent);
    doc.set(key(i, "timestamp"), c.timestamp.empty() ? std::string("-") : c.timestamp);
    doc.set(key(i, "frames"), static_cast<std::uint64_t>(c.frames));
    doc.set(key(i, "labels"), labels_to_string(c.labels));
    doc.set(key(i, "flow"), !c.flow.empty());
    io::write_file_atomic(dir / "clips" / (c.id + ".frames"), encode_frames(c, ds.height, ds.width));
    if (!c.flow.empty()) flow::write_flow_cache(dir / "clips" / (c.id + ".flow"), c.flow);
  }
  doc.save(dir / "manifest.txt");
  // Drop clip files left behind by an earlier, larger dataset in this directory.
  std::set<std::string> keep;
  for (const auto& c : ds.clips) {
    keep.insert(c.id + ".frames");
    if (!c.flow.empty()) keep.insert(c.id + ".flow");
  }
  for (const auto& e : std::filesystem::directory_iterator(dir / "clips")) {
    const auto ext = e.path().extension();
    if ((ext == ".frames" || ext == ".flow") && !keep.contains(e.path().filename().string())) {
      std::filesystem::remove(e.path());
    }
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.txt";
  if (!std::filesystem::exists(manifest)) {
    throw DataError("no dataset at '" + dir.string() + "' (missing manifest.txt; run `trinity generate`)");
  }
  KvDocument doc = KvDocument::load(manifest);
  doc.expect(kManifestKind, kManifestVersion);
  Dataset ds;
  try {
    ds.height = doc.get_uint("dataset.height");
    ds.width = doc.get_uint("dataset.width");
    ds.layout = model::ContextLayout::parse(doc.get("dataset.context_layout"));
    ds.seed = doc.get_uint_or("dataset.seed", 0);
    const std::size_t n = doc.get_uint("dataset.clips");
    for (std::size_t i = 0; i < n; ++i) {
      ClipRecord c;
      c.id = doc.get(key(i, "id"));
      c.split = doc.get(key(i, "split"));
      c.kind = parse_anomaly_kind(doc.get(key(i, "kind")));
      if (doc.get(key(i, "moment")) != "-") c.moment = Moment::parse(doc.get(key(i, "moment")));
      c.context = string_to_bits(doc.get(key(i, "context")), key(i, "context"));
      if (doc.get(key(i, "altered_moment")) != "-") {
        c.altered_moment = Moment::parse(doc.get(key(i, "altered_moment")));
      }
      if (doc.get(key(i, "altered_context")) != "-") {
        c.altered_context = string_to_bits(doc.get(key(i, "altered_context")), key(i, "altered_context"));
      }
      c.intent = doc.get(key(i, "intent")) == "-" ? "" : doc.get(key(i, "intent"));
      c.timestamp = doc.get(key(i, "timestamp")) == "-" ? "" : doc.get(key(i, "timestamp"));
      for (char ch : doc.get(key(i, "labels"))) {
        if (ch != '0' && ch != '1') throw FormatError(key(i, "labels") + ": expected a 0/1 string");
        c.labels.push_back(ch == '1');
      }
      const auto frame_path = dir / "clips" / (c.id + ".frames");
      auto [frames, pixels] =
          decode_frames(io::read_file(frame_path), ds.height, ds.width, frame_path.string());
      if (frames != doc.get_uint(key(i, "frames"))) {
        throw FormatError(frame_path.string() + ": holds " + std::to_string(frames) +
                          " frames, manifest says " + doc.get(key(i, "frames")));
      }
      c.frames = frames;
      c.pixels = std::move(pixels);
      if (doc.get_bool(key(i, "flow"))) {
        c.flow = flow::read_flow_cache(dir / "clips" / (c.id + ".flow"));
      }
      ds.clips.push_back(std::move(c));
    }
  } catch (const ConfigError& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  try {
    ds.validate();
  } catch (const DataError& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  return ds;
}

void DatasetSpec::write(KvDocument& doc) const {
  world.write(doc);
  doc.set("data.context_layout", layout.to_string());
  doc.set("data.train_clips", static_cast<std::uint64_t>(train_clips));
  doc.set("data.clip_frames", static_cast<std::uint64_t>(clip_frames));
  doc.set("data.pseudo_cases", static_cast<std::uint64_t>(pseudo_cases));
  doc.set("data.pseudo_frames", static_cast<std::uint64_t>(pseudo_frames));
  doc.set("data.test_videos", static_cast<std::uint64_t>(test_videos));
  doc.set("data.test_frames", static_cast<std::uint64_t>(test_frames));
  doc.set("data.anomaly_length", static_cast<std::uint64_t>(anomaly_length));
  doc.set("data.test_kind", to_string(test_kind));
  doc.set("data.seed", seed);
}

DatasetSpec DatasetSpec::read(const KvDocument& doc) {
  DatasetSpec s;
  s.world = WorldConfig::read(doc);
  if (doc.has("data.context_layout")) {
    s.layout = model::ContextLayout::parse(doc.get("data.context_layout"));
  }
  s.train_clips = doc.get_uint_or("data.train_clips", s.train_clips);
  s.clip_frames = doc.get_uint_or("data.clip_frames", s.clip_frames);
  s.pseudo_cases = doc.get_uint_or("data.pseudo_cases", s.pseudo_cases);
  s.pseudo_frames = doc.get_uint_or("data.pseudo_frames", s.pseudo_frames);
  s.test_videos = doc.get_uint_or("data.test_videos", s.test_videos);
  s.test_frames = doc.get_uint_or("data.test_frames", s.test_frames);
  s.anomaly_length = doc.get_uint_or("data.anomaly_length", s.anomaly_length);
  s.test_kind = parse_anomaly_kind(doc.get_or("data.test_kind", to_string(s.test_kind)));
  s.seed = doc.get_uint_or("data.seed", s.seed);
  return s;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.world.validate();
  if (spec.test_videos > 0 &&
      (spec.anomaly_length == 0 || spec.anomaly_length + 2 > spec.test_frames)) {
    throw ConfigError("anomaly_length must leave normal frames on both sides of the window");
  }
  Dataset ds;
  ds.height = spec.world.height;
  ds.width = spec.world.width;
  ds.layout = spec.layout;
  ds.seed = spec.seed;
  auto pad = [](std::size_t i) {
    std::string s = std::to_string(i);
    return std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
  };
  for (std::size_t i = 0; i < spec.train_clips; ++i) {
    const Moment m = sample_moment(spec.world, mix_seed(spec.seed, 1, i));
    Video v = generate_clip(spec.world, m, AnomalyKind::kNone, mix_seed(spec.seed, 2, i),
                            spec.clip_frames, spec.layout);
    ds.clips.push_back(to_record(v, "train_" + pad(i), "train"));
  }
  const auto rules = default_pseudo_rules();
  for (std::size_t i = 0; i < spec.pseudo_cases; ++i) {
    const PseudoRule& rule = rules[i % rules.size()];
    Video v = generate_video(spec.world, rule.original, spec.pseudo_frames,
                             mix_seed(spec.seed, 3, i), {}, spec.layout);
    ClipRecord r = to_record(v, "pseudo_" + pad(i), "pseudo");
    const PseudoContextCase c =
        make_pseudo_case(r.id, rule.original, rule.altered, rule.intent, spec.layout);
    r.altered_moment = rule.altered;
    r.altered_context = c.altered_context;
    r.intent = rule.intent;
    ds.clips.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < spec.test_videos; ++i) {
    std::mt19937_64 rng(mix_seed(spec.seed, 4, i));
    // Busy non-game hours so that every video has agents to watch.
    static constexpr int kHours[] = {7, 8, 9, 10, 11, 17, 18, 19, 20, 21};
    Moment m;
    m.day = std::uniform_int_distribution<int>(0, 6)(rng);
    m.hour = kHours[std::uniform_int_distribution<int>(0, 9)(rng)];
    const std::size_t lo = 1, hi = spec.test_frames - spec.anomaly_length - 1;
    AnomalySpec a;
    a.kind = spec.test_kind;
    a.start = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    a.end = a.start + spec.anomaly_length;
    Video v = generate_video(spec.world, m, spec.test_frames, mix_seed(spec.seed, 5, i), a,
                             spec.layout);
    ds.clips.push_back(to_record(v, "test_" + pad(i), "test"));
  }
  return ds;
}

namespace {

std::string next_token(std::istream& in, const std::string& label) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw FormatError(label + ": truncated PGM header");
}

}  // namespace

flow::Image read_pgm(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  const std::string label = path.string();
  std::istringstream in(bytes);
  const std::string magic = next_token(in, label);
  if (magic != "P5" && magic != "P2") throw FormatError(label + ": not a PGM (magic '" + magic + "')");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token(in, label));
    h = std::stoul(next_token(in, label));
    maxval = std::stoul(next_token(in, label));
  } catch (const std::invalid_argument&) {
    throw FormatError(label + ": malformed PGM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) {
    throw FormatError(label + ": invalid PGM dimensions or maxval");
  }
  flow::Image img(h, w);
  const double scale = 2.0 / static_cast<double>(maxval);
  if (magic == "P2") {
    for (double& p : img.pixels) {
      std::size_t v = 0;
      try {
        v = std::stoul(next_token(in, label));
      } catch (const std::invalid_argument&) {
        throw FormatError(label + ": bad pixel value");
      }
      if (v > maxval) throw FormatError(label + ": pixel above maxval");
      p = static_cast<double>(v) * scale - 1.0;
    }
    return img;
  }
  in.get();  // single whitespace after maxval
  const std::size_t offset = static_cast<std::size_t>(in.tellg());
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (bytes.size() - offset != w * h * bpp) {
    throw FormatError(label + ": PGM payload is " + std::to_string(bytes.size() - offset) +
                      " bytes at offset " + std::to_string(offset) + ", expected " +
                      std::to_string(w * h * bpp));
  }
  for (std::size_t i = 0; i < w * h; ++i) {
    std::size_t v = static_cast<unsigned char>(bytes[offset + i * bpp]);
    if (bpp == 2) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i * 2 + 1]);
    if (v > maxval) throw FormatError(label + ": pixel above maxval");
    img.pixels[i] = static_cast<double>(v) * scale - 1.0;
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const flow::Image& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  for (double p : image.pixels) {
    const double v = std::clamp((p + 1.0) * 127.5, 0.0, 255.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v))));
  }
  io::write_file_atomic(path, out);
}

Dataset ingest_frames(const std::filesystem::path& root, const std::filesystem::path& csv,
                      const model::ContextLayout& layout, std::size_t gap,
                      const std::string& split) {
  if (gap == 0) throw ConfigError("sampling gap must be >= 1");
  const std::string text = io::read_file(csv);
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  Dataset ds;
  ds.layout = layout;
  auto fields = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return out;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = fields(line);
    const std::string where = csv.string() + ":" + std::to_string(lineno);
    if (lineno == 1 && !f.empty() && f[0] == "clip") continue;  // header
    if (f.size() != 6) throw FormatError(where + ": expected 6 columns");
    int hour = 0, day = 0, flag = 0, game = 0;
    try {
      hour = std::stoi(f[2]);
      day = std::stoi(f[3]);
      flag = std::stoi(f[4]);
      game = std::stoi(f[5]);
    } catch (const std::exception&) {
      throw FormatError(where + ": non-numeric context field");
    }
    if (flag != 0 && flag != 1) throw FormatError(where + ": game_flag must be 0 or 1");
    ClipRecord c;
    c.id = f[0];
    c.split = split;
    c.timestamp = f[1];
    c.moment = Moment{day, hour, 0, game};
    try {
      c.context = encode_fields(hour, day, flag == 1, game, layout);
    } catch (const ConfigError& e) {
      throw FormatError(where + ": " + e.what());
    }
    const auto dir = root / c.id;
    if (!std::filesystem::is_directory(dir)) throw DataError(where + ": no frame directory " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.path().extension() == ".pgm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (std::size_t i = 0; i < files.size(); i += gap) {
      flow::Image img = read_pgm(files[i]);
      if (ds.height == 0) {
        ds.height = img.height;
        ds.width = img.width;
      }
      if (img.height != ds.height || img.width != ds.width) {
        throw DataError(files[i].string() + ": frame size differs from the first ingested frame");
      }
      for (double p : img.pixels) c.pixels.push_back(static_cast<double>(static_cast<float>(p)));
      ++c.frames;
    }
    if (c.frames < 2) throw DataError(dir.string() + ": fewer than 2 frames after sampling");
    c.labels.assign(c.frames, 0);
    ds.clips.push_back(std::move(c));
  }
  if (ds.clips.empty()) throw DataError(csv.string() + ": no clips listed");
  ds.validate();
  return ds;
}

}  // namespace trinity::data

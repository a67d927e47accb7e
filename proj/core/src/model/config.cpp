#include "trinity/model/config.hpp"

#include <sstream>

#include "trinity/error.hpp"

namespace trinity::model {

std::string to_string(Mode mode) {
  return mode == Mode::kContextual ? "contextual" : "context_free";
}

Mode parse_mode(const std::string& text) {
  if (text == "contextual") return Mode::kContextual;
  if (text == "context_free" || text == "context-free") return Mode::kContextFree;
  throw ConfigError("unknown mode '" + text + "' (expected contextual or context_free)");
}

std::size_t ContextLayout::dimension() const {
  std::size_t d = 0;
  for (const auto& s : segments) d += s.width;
  return d;
}

std::size_t ContextLayout::offset(const std::string& name) const {
  std::size_t off = 0;
  for (const auto& s : segments) {
    if (s.name == name) return off;
    off += s.width;
  }
  throw ConfigError("context layout has no segment '" + name + "'");
}

const ContextSegment& ContextLayout::segment(const std::string& name) const {
  for (const auto& s : segments) {
    if (s.name == name) return s;
  }
  throw ConfigError("context layout has no segment '" + name + "'");
}

std::string ContextLayout::to_string() const {
  std::string out;
  for (const auto& s : segments) {
    if (!out.empty()) out += ',';
    out += s.name + ':' + std::to_string(s.width);
  }
  return out;
}

ContextLayout ContextLayout::parse(const std::string& text) {
  ContextLayout layout;
  layout.segments.clear();
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos || colon == 0) {
      throw ConfigError("context layout entry '" + item + "' is not name:width");
    }
    std::size_t width = 0;
    try {
      width = std::stoul(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("context layout entry '" + item + "' has a bad width");
    }
    if (width == 0) throw ConfigError("context segment '" + item + "' has zero width");
    layout.segments.push_back({item.substr(0, colon), width});
  }
  if (layout.segments.empty()) throw ConfigError("empty context layout");
  return layout;
}

void Toggles::validate() const {
  if ((local_batch || local_patch) && !global) {
    throw ConfigError("local alignment (LB/LP) requires global alignment (GA)");
  }
}

std::string Toggles::label() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  add(global, "GA");
  add(vq, "VQ");
  add(local_batch, "LB");
  add(local_patch, "LP");
  return out.empty() ? "none" : out;
}

Toggles Toggles::parse(const std::string& label) {
  Toggles t{false, false, false, false};
  if (label == "none") return t;
  std::istringstream in(label);
  std::string item;
  while (std::getline(in, item, '+')) {
    if (item == "GA") t.global = true;
    else if (item == "VQ") t.vq = true;
    else if (item == "LB") t.local_batch = true;
    else if (item == "LP") t.local_patch = true;
    else throw ConfigError("unknown toggle '" + item + "' (expected GA, VQ, LB, LP)");
  }
  return t;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (frames < 2) fail("frames must be >= 2");
  if (patch == 0 || image_height % patch || image_width % patch) {
    fail("patch " + std::to_string(patch) + " must divide " +
         std::to_string(image_height) + "x" + std::to_string(image_width));
  }
  if (heads == 0 || dim % heads) fail("heads must divide dim");
  if (position_dim % heads) fail("heads must divide position_dim");
  if (context_dim != position_dim) fail("context_dim must equal position_dim");
  if (unet_channels.size() != 4) fail("unet_channels needs 4 entries");
  for (auto c : unet_channels) {
    if (c == 0) fail("unet channel count must be positive");
  }
  // Three 2x poolings: the bottleneck is 8x smaller than the frame.
  if (image_height % 8 || image_width % 8) fail("frame size must be divisible by 8");
  if (patch % 8) fail("patch must be a multiple of the U-net downsampling (8)");
  if (local_tokens() < 2) fail("need at least two patches");
  if (codebook_size < 2) fail("codebook_size must be >= 2");
  if (!(initial_temperature > 0.0)) fail("initial_temperature must be positive");
  if (context.dimension() == 0) fail("empty context layout");
  toggles.validate();
}

ModelConfig ModelConfig::large() {
  ModelConfig c;
  c.image_height = 256;
  c.image_width = 256;
  c.dim = 512;
  c.context_dim = 128;
  c.position_dim = 128;
  c.ffn_hidden = 2048;
  c.codebook_size = 512;
  c.unet_channels = {64, 128, 256, 512};
  return c;
}

void ModelConfig::write(KvDocument& doc) const {
  doc.set("model.mode", to_string(mode));
  doc.set("model.frames", static_cast<std::uint64_t>(frames));
  doc.set("model.image_height", static_cast<std::uint64_t>(image_height));
  doc.set("model.image_width", static_cast<std::uint64_t>(image_width));
  doc.set("model.patch", static_cast<std::uint64_t>(patch));
  doc.set("model.dim", static_cast<std::uint64_t>(dim));
  doc.set("model.context_dim", static_cast<std::uint64_t>(context_dim));
  doc.set("model.position_dim", static_cast<std::uint64_t>(position_dim));
  doc.set("model.tscab_blocks", static_cast<std::uint64_t>(tscab_blocks));
  doc.set("model.motion_blocks", static_cast<std::uint64_t>(motion_blocks));
  doc.set("model.appearance_blocks", static_cast<std::uint64_t>(appearance_blocks));
  doc.set("model.heads", static_cast<std::uint64_t>(heads));
  doc.set("model.ffn_hidden", static_cast<std::uint64_t>(ffn_hidden));
  doc.set("model.codebook_size", static_cast<std::uint64_t>(codebook_size));
  std::string ch;
  for (auto c : unet_channels) ch += (ch.empty() ? "" : ",") + std::to_string(c);
  doc.set("model.unet_channels", ch);
  doc.set("model.initial_temperature", initial_temperature);
  doc.set("model.context_layout", context.to_string());
  doc.set("model.toggles", toggles.label());
}

ModelConfig ModelConfig::read(const KvDocument& doc) {
  ModelConfig c;
  c.mode = parse_mode(doc.get_or("model.mode", to_string(c.mode)));
  c.frames = doc.get_uint_or("model.frames", c.frames);
  c.image_height = doc.get_uint_or("model.image_height", c.image_height);
  c.image_width = doc.get_uint_or("model.image_width", c.image_width);
  c.patch = doc.get_uint_or("model.patch", c.patch);
  c.dim = doc.get_uint_or("model.dim", c.dim);
  c.context_dim = doc.get_uint_or("model.context_dim", c.context_dim);
  c.position_dim = doc.get_uint_or("model.position_dim", c.position_dim);
  c.tscab_blocks = doc.get_uint_or("model.tscab_blocks", c.tscab_blocks);
  c.motion_blocks = doc.get_uint_or("model.motion_blocks", c.motion_blocks);
  c.appearance_blocks = doc.get_uint_or("model.appearance_blocks", c.appearance_blocks);
  c.heads = doc.get_uint_or("model.heads", c.heads);
  c.ffn_hidden = doc.get_uint_or("model.ffn_hidden", c.ffn_hidden);
  c.codebook_size = doc.get_uint_or("model.codebook_size", c.codebook_size);
  if (doc.has("model.unet_channels")) {
    c.unet_channels.clear();
    std::istringstream in(doc.get("model.unet_channels"));
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        c.unet_channels.push_back(std::stoul(item));
      } catch (const std::exception&) {
        throw ConfigError("model.unet_channels: bad entry '" + item + "'");
      }
    }
  }
  c.initial_temperature = doc.get_double_or("model.initial_temperature", c.initial_temperature);
  if (doc.has("model.context_layout")) {
    c.context = ContextLayout::parse(doc.get("model.context_layout"));
  }
  if (doc.has("model.toggles")) c.toggles = Toggles::parse(doc.get("model.toggles"));
  c.validate();
  return c;
}

}  // namespace trinity::model

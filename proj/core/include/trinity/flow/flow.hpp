#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace trinity::flow {

/// Grayscale frame, row-major, values nominally in [-1, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), pixels(h * w, fill) {}
  double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

/// Per-pixel displacement (u along x, v along y) in pixels per frame step.
struct FlowField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> u;
  std::vector<double> v;

  FlowField() = default;
  FlowField(std::size_t h, std::size_t w)
      : height(h), width(w), u(h * w, 0.0), v(h * w, 0.0) {}
};

struct SolverConfig {
  double lambda = 0.15;
  double theta = 0.3;
  double tau = 0.25;
  std::size_t iterations = 100;  // total, split evenly across warps
  std::size_t warps = 5;
};

/// Duality-based TV-L1 flow from `frame_a` to `frame_b` at a single scale.
/// Intensities are mapped from [-1, 1] to [0, 255] internally, the range the
/// default λ is calibrated for.
FlowField compute_flow(const Image& frame_a, const Image& frame_b,
                       const SolverConfig& config = {});

inline constexpr std::size_t kOrientationBins = 12;
inline constexpr std::size_t kHofChannels = 25;

/// 12 orientation mass fractions, background ratio, 12 per-bin mean
/// magnitudes. Bin k covers [30k - 15°, 30k + 15°) with angle measured by
/// atan2(v, u).
struct HofPatchFeature {
  std::array<double, kHofChannels> channels{};

  double fraction(std::size_t bin) const { return channels[bin]; }
  double background() const { return channels[kOrientationBins]; }
  double magnitude(std::size_t bin) const {
    return channels[kOrientationBins + 1 + bin];
  }
};

struct HofGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<HofPatchFeature> patches;  // row-major

  const HofPatchFeature& at(std::size_t r, std::size_t c) const {
    return patches[r * cols + c];
  }
};

std::size_t orientation_bin(double u, double v);

HofGrid hof_features(const FlowField& flow, std::size_t patch_size,
                     double magnitude_threshold);

/// Per-patch mean of the grids of consecutive frame pairs.
HofGrid average_hof(std::span<const HofGrid> grids);

// Flow cache: "TRNYFLOW" | u32 version | u32 pairs | u32 H | u32 W |
// per pair: float32 u plane, float32 v plane (little-endian).
void write_flow_cache(const std::filesystem::path& path,
                      std::span<const FlowField> flows);
std::vector<FlowField> read_flow_cache(const std::filesystem::path& path);
std::string encode_flow_cache(std::span<const FlowField> flows);
std::vector<FlowField> decode_flow_cache(std::string bytes,
                                         const std::string& label);

}  // namespace trinity::flow

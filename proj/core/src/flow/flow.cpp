#include "trinity/flow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "trinity/binary_io.hpp"
#include "trinity/error.hpp"

namespace trinity::flow {

namespace {

constexpr double kIntensityScale = 127.5;

// Clamped sampling.
double pix(const std::vector<double>& img, std::size_t h, std::size_t w,
           long y, long x) {
  y = std::clamp<long>(y, 0, static_cast<long>(h) - 1);
  x = std::clamp<long>(x, 0, static_cast<long>(w) - 1);
  return img[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
}

double bilinear(const std::vector<double>& img, std::size_t h, std::size_t w,
                double y, double x) {
  const double fy = std::floor(y), fx = std::floor(x);
  const double dy = y - fy, dx = x - fx;
  const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
  return (1 - dy) * ((1 - dx) * pix(img, h, w, y0, x0) + dx * pix(img, h, w, y0, x0 + 1)) +
         dy * ((1 - dx) * pix(img, h, w, y0 + 1, x0) + dx * pix(img, h, w, y0 + 1, x0 + 1));
}

void central_gradient(const std::vector<double>& img, std::size_t h,
                      std::size_t w, std::vector<double>& gx,
                      std::vector<double>& gy) {
  gx.assign(h * w, 0.0);
  gy.assign(h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const long ly = static_cast<long>(y), lx = static_cast<long>(x);
      gx[y * w + x] = 0.5 * (pix(img, h, w, ly, lx + 1) - pix(img, h, w, ly, lx - 1));
      gy[y * w + x] = 0.5 * (pix(img, h, w, ly + 1, lx) - pix(img, h, w, ly - 1, lx));
    }
  }
}

void check_image(const Image& img, const char* name) {
  if (img.pixels.size() != img.height * img.width || img.height == 0 ||
      img.width == 0) {
    throw ContractViolation(std::string("compute_flow: malformed ") + name);
  }
}

}  // namespace

FlowField compute_flow(const Image& frame_a, const Image& frame_b,
                       const SolverConfig& config) {
  check_image(frame_a, "frame_a");
  check_image(frame_b, "frame_b");
  if (frame_a.height != frame_b.height || frame_a.width != frame_b.width) {
    throw ContractViolation(
        "compute_flow: frame shapes differ (" + std::to_string(frame_a.height) +
        "x" + std::to_string(frame_a.width) + " vs " +
        std::to_string(frame_b.height) + "x" + std::to_string(frame_b.width) + ")");
  }
  if (config.warps == 0 || config.iterations < config.warps) {
    throw ContractViolation("compute_flow: need at least one iteration per warp");
  }
  const std::size_t h = frame_a.height, w = frame_a.width, n = h * w;
  std::vector<double> i0(n), i1(n);
  for (std::size_t i = 0; i < n; ++i) {
    i0[i] = (frame_a.pixels[i] + 1.0) * kIntensityScale;
    i1[i] = (frame_b.pixels[i] + 1.0) * kIntensityScale;
  }
  std::vector<double> i1x, i1y;
  central_gradient(i1, h, w, i1x, i1y);

  FlowField f(h, w);
  auto& u1 = f.u;
  auto& u2 = f.v;
  std::vector<double> p11(n, 0.0), p12(n, 0.0), p21(n, 0.0), p22(n, 0.0);
  std::vector<double> wI(n), wx(n), wy(n), grad2(n), rho_c(n), v1(n), v2(n);
  const double lt = config.lambda * config.theta;
  const double taut = config.tau / config.theta;
  const std::size_t inner = config.iterations / config.warps;

  for (std::size_t warp = 0; warp < config.warps; ++warp) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        const double sy = static_cast<double>(y) + u2[i];
        const double sx = static_cast<double>(x) + u1[i];
        wI[i] = bilinear(i1, h, w, sy, sx);
        wx[i] = bilinear(i1x, h, w, sy, sx);
        wy[i] = bilinear(i1y, h, w, sy, sx);
        grad2[i] = wx[i] * wx[i] + wy[i] * wy[i];
        rho_c[i] = wI[i] - wx[i] * u1[i] - wy[i] * u2[i] - i0[i];
      }
    }
    for (std::size_t it = 0; it < inner; ++it) {
      // Pointwise thresholding of the linearized data term.
      for (std::size_t i = 0; i < n; ++i) {
        const double rho = rho_c[i] + wx[i] * u1[i] + wy[i] * u2[i];
        double d1 = 0.0, d2 = 0.0;
        if (rho < -lt * grad2[i]) {
          d1 = lt * wx[i];
          d2 = lt * wy[i];
        } else if (rho > lt * grad2[i]) {
          d1 = -lt * wx[i];
          d2 = -lt * wy[i];
        } else if (grad2[i] > 1e-10) {
          d1 = -rho * wx[i] / grad2[i];
          d2 = -rho * wy[i] / grad2[i];
        }
        v1[i] = u1[i] + d1;
        v2[i] = u2[i] + d2;
      }
      // u = v + θ div p  (backward differences, zero flux at the border)
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t i = y * w + x;
          auto div = [&](const std::vector<double>& px, const std::vector<double>& py) {
            const double dx = (x == 0 ? px[i] : (x == w - 1 ? -px[i - 1] : px[i] - px[i - 1]));
            const double dy = (y == 0 ? py[i] : (y == h - 1 ? -py[i - w] : py[i] - py[i - w]));
            return dx + dy;
          };
          u1[i] = v1[i] + config.theta * div(p11, p12);
          u2[i] = v2[i] + config.theta * div(p21, p22);
        }
      }
      // Dual ascent with reprojection (forward differences).
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t i = y * w + x;
          const double u1x = x + 1 < w ? u1[i + 1] - u1[i] : 0.0;
          const double u1y = y + 1 < h ? u1[i + w] - u1[i] : 0.0;
          const double u2x = x + 1 < w ? u2[i + 1] - u2[i] : 0.0;
          const double u2y = y + 1 < h ? u2[i + w] - u2[i] : 0.0;
          const double ng1 = 1.0 + taut * std::sqrt(u1x * u1x + u1y * u1y);
          const double ng2 = 1.0 + taut * std::sqrt(u2x * u2x + u2y * u2y);
          p11[i] = (p11[i] + taut * u1x) / ng1;
          p12[i] = (p12[i] + taut * u1y) / ng1;
          p21[i] = (p21[i] + taut * u2x) / ng2;
          p22[i] = (p22[i] + taut * u2y) / ng2;
        }
      }
    }
  }
  return f;
}

std::size_t orientation_bin(double u, double v) {
  double deg = std::atan2(v, u) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  auto bin = static_cast<std::size_t>(std::floor((deg + 15.0) / 30.0));
  return bin % kOrientationBins;
}

HofGrid hof_features(const FlowField& flow, std::size_t patch_size,
                     double magnitude_threshold) {
  if (patch_size == 0 || flow.height % patch_size || flow.width % patch_size) {
    throw ConfigError("hof_features: patch size " + std::to_string(patch_size) +
                      " does not divide " + std::to_string(flow.height) + "x" +
                      std::to_string(flow.width));
  }
  if (!(magnitude_threshold > 0.0)) {
    throw ConfigError("hof_features: magnitude threshold must be positive");
  }
  HofGrid grid;
  grid.rows = flow.height / patch_size;
  grid.cols = flow.width / patch_size;
  grid.patches.resize(grid.rows * grid.cols);
  const double area = static_cast<double>(patch_size * patch_size);
  for (std::size_t pr = 0; pr < grid.rows; ++pr) {
    for (std::size_t pc = 0; pc < grid.cols; ++pc) {
      std::array<std::size_t, kOrientationBins> count{};
      std::array<double, kOrientationBins> mag_sum{};
      std::size_t background = 0;
      for (std::size_t y = pr * patch_size; y < (pr + 1) * patch_size; ++y) {
        for (std::size_t x = pc * patch_size; x < (pc + 1) * patch_size; ++x) {
          const std::size_t i = y * flow.width + x;
          const double u = flow.u[i], v = flow.v[i];
          if (!std::isfinite(u) || !std::isfinite(v)) {
            throw ContractViolation("hof_features: non-finite flow");
          }
          const double mag = std::hypot(u, v);
          if (mag < magnitude_threshold) {
            ++background;
            continue;
          }
          const std::size_t b = orientation_bin(u, v);
          ++count[b];
          mag_sum[b] += mag;
        }
      }
      HofPatchFeature& f = grid.patches[pr * grid.cols + pc];
      for (std::size_t b = 0; b < kOrientationBins; ++b) {
        f.channels[b] = static_cast<double>(count[b]) / area;
        f.channels[kOrientationBins + 1 + b] =
            count[b] ? mag_sum[b] / static_cast<double>(count[b]) : 0.0;
      }
      f.channels[kOrientationBins] = static_cast<double>(background) / area;
    }
  }
  return grid;
}

HofGrid average_hof(std::span<const HofGrid> grids) {
  if (grids.empty()) throw ContractViolation("average_hof: no grids");
  HofGrid out = grids[0];
  for (std::size_t g = 1; g < grids.size(); ++g) {
    if (grids[g].rows != out.rows || grids[g].cols != out.cols) {
      throw ContractViolation("average_hof: grid shapes differ");
    }
    for (std::size_t p = 0; p < out.patches.size(); ++p) {
      for (std::size_t c = 0; c < kHofChannels; ++c) {
        out.patches[p].channels[c] += grids[g].patches[p].channels[c];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(grids.size());
  for (auto& p : out.patches) {
    for (double& c : p.channels) c *= inv;
  }
  return out;
}

namespace {
constexpr std::string_view kFlowMagic{"TRNYFLOW", 8};
constexpr std::uint32_t kFlowVersion = 1;
}  // namespace

std::string encode_flow_cache(std::span<const FlowField> flows) {
  io::ByteWriter w;
  w.bytes(kFlowMagic);
  w.u32(kFlowVersion);
  const std::size_t h = flows.empty() ? 0 : flows[0].height;
  const std::size_t wd = flows.empty() ? 0 : flows[0].width;
  w.u32(static_cast<std::uint32_t>(flows.size()));
  w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(wd));
  for (const auto& f : flows) {
    if (f.height != h || f.width != wd) {
      throw ContractViolation("flow cache: inconsistent field shapes");
    }
    for (double x : f.u) w.f32(static_cast<float>(x));
    for (double x : f.v) w.f32(static_cast<float>(x));
  }
  return w.buffer();
}

std::vector<FlowField> decode_flow_cache(std::string bytes,
                                         const std::string& label) {
  io::ByteReader r(std::move(bytes), label);
  r.expect_magic(kFlowMagic);
  const std::uint32_t version = r.u32();
  if (version != kFlowVersion) {
    r.fail("unsupported flow cache version " + std::to_string(version));
  }
  const std::uint32_t pairs = r.u32();
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  const std::size_t need = std::size_t{pairs} * h * w * 2 * 4;
  if (r.remaining() != need) {
    r.fail("payload size " + std::to_string(r.remaining()) + " != expected " +
           std::to_string(need));
  }
  std::vector<FlowField> out;
  for (std::uint32_t p = 0; p < pairs; ++p) {
    FlowField f(h, w);
    for (double& x : f.u) x = r.f32();
    for (double& x : f.v) x = r.f32();
    out.push_back(std::move(f));
  }
  return out;
}

void write_flow_cache(const std::filesystem::path& path,
                      std::span<const FlowField> flows) {
  io::write_file_atomic(path, encode_flow_cache(flows));
}

std::vector<FlowField> read_flow_cache(const std::filesystem::path& path) {
  return decode_flow_cache(io::read_file(path), path.string());
}

}  // namespace trinity::flow

#include "trinity/infer/scores.hpp"

#include <algorithm>
#include <cmath>

#include "trinity/error.hpp"

namespace trinity::infer {

double psnr_from_mse(double mse, double ceiling) {
  if (!(mse >= 0.0)) throw ContractViolation("psnr: negative or NaN mse");
  if (mse == 0.0) return ceiling;
  return std::min(ceiling, 10.0 * std::log10(kPeakToPeak * kPeakToPeak / mse));
}

double frame_psnr(std::span<const double> prediction, std::span<const double> target,
                  double ceiling) {
  if (prediction.size() != target.size() || prediction.empty()) {
    throw ContractViolation("frame_psnr: prediction has " + std::to_string(prediction.size()) +
                            " pixels, target " + std::to_string(target.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = prediction[i] - target[i];
    s += d * d;
  }
  return psnr_from_mse(s / static_cast<double>(target.size()), ceiling);
}

std::vector<double> min_max_normalize(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  if (out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double a = *lo, range = *hi - *lo;
  for (double& v : out) v = range > 0.0 ? (v - a) / range : 0.5;
  return out;
}

std::vector<double> psnr_score(std::span<const double> psnr_values) {
  return min_max_normalize(psnr_values);
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_rows(const nn::Tensor& a, const nn::Tensor& b, const char* op) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw ContractViolation(std::string(op) + ": " + nn::shape_str(a.shape()) + " vs " +
                            nn::shape_str(b.shape()));
  }
}

}  // namespace

std::vector<double> sigmoid_similarity(const nn::Tensor& h_a, const nn::Tensor& h_b,
                                       double tau) {
  check_rows(h_a, h_b, "sigmoid_similarity");
  if (!(tau > 0.0)) throw ContractViolation("temperature must be positive");
  const std::size_t b = h_a.dim(0), d = h_a.dim(1);
  auto x = h_a.data(), y = h_b.data();
  std::vector<double> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += x[i * d + j] * y[i * d + j];
    out[i] = sigmoid(dot / tau);
  }
  return out;
}

std::vector<double> global_context_score(const nn::Tensor& cxt_g, const nn::Tensor& mot_g,
                                         const nn::Tensor& app_g, double tau) {
  auto m = sigmoid_similarity(cxt_g, mot_g, tau);
  auto a = sigmoid_similarity(cxt_g, app_g, tau);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (m[i] + a[i]);
  return m;
}

std::vector<double> local_misalignment(const nn::Tensor& app_l, const nn::Tensor& mot_l,
                                       double tau) {
  if (app_l.rank() != 3 || app_l.shape() != mot_l.shape()) {
    throw ContractViolation("local_misalignment: " + nn::shape_str(app_l.shape()) + " vs " +
                            nn::shape_str(mot_l.shape()));
  }
  if (!(tau > 0.0)) throw ContractViolation("temperature must be positive");
  const std::size_t b = app_l.dim(0), l = app_l.dim(1), d = app_l.dim(2);
  auto x = app_l.data(), y = mot_l.data();
  std::vector<double> out(b);
  std::vector<double> row(l);
  for (std::size_t s = 0; s < b; ++s) {
    double fro = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
      double mx = -INFINITY;
      for (std::size_t j = 0; j < l; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          dot += x[(s * l + i) * d + k] * y[(s * l + j) * d + k];
        }
        row[j] = dot / tau;
        mx = std::max(mx, row[j]);
      }
      double z = 0.0;
      for (double& r : row) z += (r = std::exp(r - mx));
      for (std::size_t j = 0; j < l; ++j) {
        const double e = row[j] / z - (i == j ? 1.0 : 0.0);
        fro += e * e;
      }
    }
    out[s] = std::sqrt(fro);
  }
  return out;
}

std::vector<double> local_normalcy(std::span<const double> raw) {
  auto n = min_max_normalize(raw);
  for (double& v : n) v = 1.0 - v;
  return n;
}

std::vector<double> fuse(std::span<const double> s_r, std::span<const double> other,
                         double alpha) {
  if (s_r.size() != other.size()) {
    throw ContractViolation("fuse: component lengths " + std::to_string(s_r.size()) + " and " +
                            std::to_string(other.size()) + " differ");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  std::vector<double> out(s_r.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = alpha == 1.0 ? s_r[i] : alpha * s_r[i] + (1.0 - alpha) * other[i];
  }
  return out;
}

std::vector<double> median_filter(std::span<const double> values, std::size_t kernel) {
  if (kernel == 0 || kernel % 2 == 0) {
    throw ConfigError("median filter kernel must be odd, got " + std::to_string(kernel));
  }
  const long n = static_cast<long>(values.size());
  const long half = static_cast<long>(kernel / 2);
  std::vector<double> out(values.size()), window(kernel);
  for (long i = 0; i < n; ++i) {
    for (long k = -half; k <= half; ++k) {
      window[static_cast<std::size_t>(k + half)] =
          values[static_cast<std::size_t>(std::clamp(i + k, 0L, n - 1))];
    }
    std::nth_element(window.begin(), window.begin() + half, window.end());
    out[static_cast<std::size_t>(i)] = window[static_cast<std::size_t>(half)];
  }
  return out;
}

std::vector<double> clip_to_frames(std::span<const double> clip_scores,
                                   std::size_t clip_length) {
  if (clip_scores.empty() || clip_length == 0) {
    throw ContractViolation("clip_to_frames: no clips");
  }
  std::vector<double> out(clip_scores.size() + clip_length - 1);
  for (std::size_t f = 0; f < out.size(); ++f) {
    out[f] = clip_scores[f + 1 < clip_length ? 0 : f + 1 - clip_length];
  }
  return out;
}

ScoreTimeline fuse_and_smooth(std::vector<double> s_r, std::vector<double> s_aux, double alpha,
                              std::size_t kernel, std::vector<int> labels) {
  ScoreTimeline t;
  t.normalcy = median_filter(fuse(s_r, s_aux, alpha), kernel);
  t.anomaly.resize(t.normalcy.size());
  for (std::size_t i = 0; i < t.normalcy.size(); ++i) t.anomaly[i] = 1.0 - t.normalcy[i];
  if (!labels.empty() && labels.size() != t.normalcy.size()) {
    throw ContractViolation("timeline labels do not match frame count");
  }
  t.s_r = std::move(s_r);
  t.s_aux = std::move(s_aux);
  t.labels = std::move(labels);
  return t;
}

}  // namespace trinity::infer

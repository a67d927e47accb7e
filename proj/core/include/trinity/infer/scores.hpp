#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "trinity/numerics/tensor.hpp"

namespace trinity::infer {

inline constexpr double kPsnrCeiling = 99.0;
inline constexpr double kPeakToPeak = 2.0;

/// 10·log10(range² / mse), capped at `ceiling` (also for mse == 0).
double psnr_from_mse(double mse, double ceiling = kPsnrCeiling);
double frame_psnr(std::span<const double> prediction, std::span<const double> target,
                  double ceiling = kPsnrCeiling);

/// Min-max normalization to [0, 1]; a zero range maps every value to 0.5.
std::vector<double> min_max_normalize(std::span<const double> values);

/// S_r: min-max normalized PSNR over one video.
std::vector<double> psnr_score(std::span<const double> psnr_values);

/// Per-clip σ(h_a·h_b / τ) from matched rows. h_a, h_b: [B, D].
std::vector<double> sigmoid_similarity(const nn::Tensor& h_a, const nn::Tensor& h_b, double tau);

/// S_g = ½(σ(cxt·mot/τ) + σ(cxt·app/τ)) per clip.
std::vector<double> global_context_score(const nn::Tensor& cxt_g, const nn::Tensor& mot_g,
                                         const nn::Tensor& app_g, double tau);

/// Raw S_l = ‖softmax(app·motᵀ/τ) − I‖_F per clip. Inputs: [B, L, D].
std::vector<double> local_misalignment(const nn::Tensor& app_l, const nn::Tensor& mot_l,
                                       double tau);

/// Min-max normalizes raw S_l over a video and inverts it (1 = most normal).
std::vector<double> local_normalcy(std::span<const double> raw);

/// S = α·S_r + (1 − α)·other
std::vector<double> fuse(std::span<const double> s_r, std::span<const double> other, double alpha);

/// Median filter with edge replication. Kernel must be odd.
std::vector<double> median_filter(std::span<const double> values, std::size_t kernel);

/// Frame f inherits the score of the clip ending at f (clip f − T + 1);
/// frames before the first full clip inherit clip 0.
std::vector<double> clip_to_frames(std::span<const double> clip_scores, std::size_t clip_length);

struct ScoreTimeline {
  std::vector<double> s_r;
  std::vector<double> s_aux;  // S_g or normalized S_l
  std::vector<double> normalcy;
  std::vector<double> anomaly;  // 1 − S
  std::vector<int> labels;

  std::size_t size() const { return normalcy.size(); }
};

/// Fusion then median smoothing; anomaly = 1 − S.
ScoreTimeline fuse_and_smooth(std::vector<double> s_r, std::vector<double> s_aux, double alpha,
                              std::size_t kernel, std::vector<int> labels = {});

}  // namespace trinity::infer

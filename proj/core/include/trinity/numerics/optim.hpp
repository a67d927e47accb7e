#pragma once

#include <cstdint>
#include <vector>

#include "trinity/numerics/layers.hpp"

namespace trinity::nn {

/// Cosine annealing from `base` to `minimum` over `total_steps`; constant
/// at `minimum` afterwards.
struct CosineSchedule {
  double base = 2e-4;
  double minimum = 0.0;
  std::uint64_t total_steps = 1;

  double rate(std::uint64_t step) const;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double max_grad_norm = 0.0;
};

/// Adam with bias correction over every tensor of a ParameterStore (or an
/// explicit list). Moment buffers mirror the parameter shapes.
class Adam {
 public:
  Adam(std::vector<Tensor> params, CosineSchedule schedule,
       AdamOptions options = {});
  Adam(const ParameterStore& store, CosineSchedule schedule,
       AdamOptions options = {});

  /// Applies one update from the gradients of the latest backward pass, then
  /// zeroes them. Throws ContractViolation if no backward pass ran since the
  /// previous step.
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return steps_; }
  double current_rate() const { return schedule_.rate(steps_); }
  const CosineSchedule& schedule() const { return schedule_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  CosineSchedule schedule_;
  AdamOptions options_;
  std::uint64_t steps_ = 0;
  std::uint64_t last_backward_ = 0;
};

}  // namespace trinity::nn

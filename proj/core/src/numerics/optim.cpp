#include "trinity/numerics/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "trinity/error.hpp"

namespace trinity::nn {

double CosineSchedule::rate(std::uint64_t step) const {
  if (total_steps == 0 || step >= total_steps) return minimum;
  const double progress =
      static_cast<double>(step) / static_cast<double>(total_steps);
  return minimum +
         0.5 * (base - minimum) * (1.0 + std::cos(std::numbers::pi * progress));
}

Adam::Adam(std::vector<Tensor> params, CosineSchedule schedule,
           AdamOptions options)
    : params_(std::move(params)),
      schedule_(schedule),
      options_(options),
      last_backward_(backward_pass_count()) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

namespace {

std::vector<Tensor> store_tensors(const ParameterStore& store) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : store.entries()) out.push_back(t);
  return out;
}

}  // namespace

Adam::Adam(const ParameterStore& store, CosineSchedule schedule,
           AdamOptions options)
    : Adam(store_tensors(store), schedule, options) {}

void Adam::step() {
  const std::uint64_t passes = backward_pass_count();
  if (passes == last_backward_) {
    throw ContractViolation(
        "Adam::step: stale gradients (no backward pass since the last step)");
  }
  last_backward_ = passes;

  double clip = 1.0;
  if (options_.max_grad_norm > 0.0) {
    double sq = 0.0;
    for (auto& p : params_) {
      for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > options_.max_grad_norm) clip = options_.max_grad_norm / norm;
  }

  const double lr = schedule_.rate(steps_);
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto data = params_[i].mutable_data();
    auto grad = params_[i].mutable_grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad[j] * clip;
      m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g;
      v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g * g;
      data[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.eps);
    }
    std::fill(grad.begin(), grad.end(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace trinity::nn

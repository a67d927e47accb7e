#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "trinity/numerics/tensor.hpp"

namespace trinity::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of `f` with central finite differences
/// for every element of every input. Relative error uses the denominator
/// max(|analytic|, |numeric|, floor).
inline GradCheckResult grad_check(
    std::vector<nn::Tensor> inputs,
    const std::function<nn::Tensor(const std::vector<nn::Tensor>&)>& f,
    double step = 1e-5, double floor = 1e-3) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  nn::backward(f(inputs));
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GradCheckResult r;
  nn::NoGradGuard guard;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + step;
      const double up = f(inputs).item();
      data[i] = orig - step;
      const double down = f(inputs).item();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      r.max_rel_error = std::max(r.max_rel_error, std::abs(a - numeric) / denom);
      ++r.checked;
    }
  }
  return r;
}

inline nn::Tensor random_tensor(nn::Shape shape, std::mt19937_64& rng,
                                double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(nn::shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return nn::Tensor::from_data(std::move(shape), std::move(v));
}

/// Fixed random weighting so vector-valued ops reduce to a scalar loss
/// with non-degenerate gradients.
inline nn::Tensor weighted_sum(const nn::Tensor& t, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  return nn::sum(nn::mul(t, random_tensor(t.shape(), rng)));
}

}  // namespace trinity::testing

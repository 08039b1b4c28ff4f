#include "fttab/optim.hpp"

#include <algorithm>
#include <cmath>

namespace fttab {

void zero_grads(ParameterList& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

void mask_frozen_rows(ParameterList& params) {
  for (auto& p : params) {
    if (p.frozen_rows.empty() || !p.tensor.has_grad()) continue;
    const std::size_t width = p.tensor.rank() == 2 ? p.tensor.cols() : p.tensor.numel();
    auto g = p.tensor.mutable_grad();
    for (auto r : p.frozen_rows) std::fill_n(g.begin() + static_cast<std::ptrdiff_t>(r * width), width, 0.0);
  }
}

std::size_t count_trainable(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params)
    if (p.tensor.requires_grad()) n += p.tensor.numel();
  return n;
}

double clip_grad_norm(ParameterList& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    for (double g : p.tensor.mutable_grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& p : params) {
      if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
      for (double& g : p.tensor.mutable_grad()) g *= f;
    }
  }
  return norm;
}

Adam::Adam(ParameterList params, AdamConfig config) : params_(std::move(params)), config_(config) {
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (const auto& p : params_) {
    first_moment_.emplace_back(p.tensor.numel(), 0.0);
    second_moment_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::zero_grad() { zero_grads(params_); }

void Adam::step() {
  ++step_;
  const double t = static_cast<double>(step_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    auto values = p.tensor.data();
    auto grad = p.tensor.mutable_grad();
    auto& m = first_moment_[k];
    auto& v = second_moment_[k];
    const std::size_t width = p.tensor.rank() == 2 ? p.tensor.cols() : p.tensor.numel();
    std::vector<bool> skip(values.size() / std::max<std::size_t>(width, 1), false);
    for (auto r : p.frozen_rows) skip[r] = true;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (skip[i / width]) continue;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace fttab

#include "smoe/train/optim.hpp"

#include <cmath>
#include <numbers>

#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe::train {

double cosine_lr(std::size_t step, std::size_t total_steps, double peak, double floor) {
  if (peak < floor) throw ConfigError(fmt::format("cosine_lr: peak {} below floor {}", peak, floor));
  if (total_steps == 0 || step > total_steps) {
    throw ContractError(fmt::format("cosine_lr: step {} outside [0, {}]", step, total_steps));
  }
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return floor + 0.5 * (peak - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.clear_grad();
}

double Optimizer::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params_) {
      if (!p.tensor.has_grad()) continue;
      for (double& g : p.tensor.grad_buffer()) g *= f;
    }
  }
  return norm;
}

Sgd::Sgd(std::vector<num::NamedTensor> params, double momentum)
    : Optimizer(std::move(params)), momentum_(momentum), velocity_(params_.size()) {
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("sgd momentum must be in [0, 1)");
}

void Sgd::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].tensor;
    if (!t.has_grad()) continue;
    auto& v = velocity_[i];
    if (v.empty()) v.assign(t.size(), 0.0);
    const auto g = t.grad();
    auto w = t.mutable_data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      w[j] -= lr * v[j];
    }
  }
}

Adam::Adam(std::vector<num::NamedTensor> params, double beta1, double beta2, double eps)
    : Optimizer(std::move(params)),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(params_.size()),
      v_(params_.size()),
      steps_(params_.size(), 0) {
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || eps <= 0.0) {
    throw ConfigError("adam: betas must be in [0, 1) and eps positive");
  }
}

void Adam::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].tensor;
    if (!t.has_grad()) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    if (m.empty()) {
      m.assign(t.size(), 0.0);
      v.assign(t.size(), 0.0);
    }
    const auto k = static_cast<double>(++steps_[i]);
    const double c1 = 1.0 - std::pow(beta1_, k);
    const double c2 = 1.0 - std::pow(beta2_, k);
    const auto g = t.grad();
    auto w = t.mutable_data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& c, std::vector<num::NamedTensor> params) {
  if (c.kind == "sgd") return std::make_unique<Sgd>(std::move(params), c.momentum);
  if (c.kind == "adam") return std::make_unique<Adam>(std::move(params), c.beta1, c.beta2, c.eps);
  throw ConfigError("unknown optimizer `" + c.kind + "` (expected adam or sgd)");
}

}  // namespace smoe::train

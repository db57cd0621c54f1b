#pragma once

#include <memory>
#include <string>
#include <vector>

#include "smoe/numerics/grad_check.hpp"

namespace smoe::train {

// floor + 0.5 (peak - floor)(1 + cos(pi step / total)).
double cosine_lr(std::size_t step, std::size_t total_steps, double peak, double floor);

// Parameters without a gradient in the current step are skipped entirely:
// their values and optimizer state stay untouched.
class Optimizer {
 public:
  explicit Optimizer(std::vector<num::NamedTensor> params) : params_(std::move(params)) {}
  virtual ~Optimizer() = default;

  virtual void step(double lr) = 0;
  // Drops every gradient (the next step starts from "no gradient").
  void zero_grad();
  // Rescales present gradients so their global L2 norm is at most max_norm;
  // returns the norm before clipping.
  double clip_grad_norm(double max_norm);

  const std::vector<num::NamedTensor>& params() const { return params_; }

 protected:
  std::vector<num::NamedTensor> params_;
};

class Sgd final : public Optimizer {
 public:
  Sgd(std::vector<num::NamedTensor> params, double momentum);
  void step(double lr) override;

 private:
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

class Adam final : public Optimizer {
 public:
  Adam(std::vector<num::NamedTensor> params, double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-9);
  void step(double lr) override;

 private:
  double beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  std::vector<std::size_t> steps_;  // per parameter, for bias correction
};

struct OptimizerConfig {
  std::string kind = "adam";  // adam | sgd
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& config, std::vector<num::NamedTensor> params);

}  // namespace smoe::train

#include "smoe/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "smoe/error.hpp"
#include "smoe/numerics/tape.hpp"
#include "smoe/util/random.hpp"

namespace smoe::num {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<NamedTensor> params,
                           const GradCheckOptions& options) {
  for (auto& p : params) {
    p.tensor.clear_grad();
    p.tensor.set_requires_grad(true);
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = f();
    if (!std::isfinite(loss.item())) {
      std::string culprits;
      for (const auto& p : params) {
        const auto d = p.tensor.data();
        if (std::any_of(d.begin(), d.end(), [](double v) { return !std::isfinite(v); })) {
          culprits += (culprits.empty() ? "" : ", ") + p.name;
        }
      }
      throw NumericError(culprits.empty() ? std::string("grad_check: loss is not finite")
                                          : "grad_check: loss is not finite; non-finite values in " + culprits);
    }
    tape.backward(loss);
    for (const auto& p : params) {
      if (p.tensor.has_grad()) {
        analytic.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
      } else {
        analytic.emplace_back(p.tensor.size(), 0.0);
      }
    }
  }

  Rng rng(derive_seed(options.seed, "grad_check"));
  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    std::vector<std::size_t> coords(p.tensor.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_entries_per_param && coords.size() > options.max_entries_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_entries_per_param);
      std::sort(coords.begin(), coords.end());
    }
    GradCheckEntry entry{p.name, 0.0, coords.size(), true};
    auto values = p.tensor.mutable_data();
    for (auto i : coords) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = f().item();
      values[i] = saved - options.step;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      if (!std::isfinite(numeric) || !std::isfinite(analytic[pi][i])) {
        throw NumericError(fmt::format("grad_check: non-finite gradient for {}[{}]", p.name, i));
      }
      const double rel = std::abs(analytic[pi][i] - numeric) / std::max(1.0, std::abs(numeric));
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
    }
    entry.passed = entry.max_rel_error <= options.tolerance;
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace smoe::num

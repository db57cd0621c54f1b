#pragma once

#include <functional>
#include <string>
#include <vector>

#include "smoe/numerics/tensor.hpp"

namespace smoe::num {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed = true;
  double worst() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // 0 checks every coordinate; otherwise a seeded sample of at most this many
  // coordinates per parameter.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

// Compares reverse-mode gradients of the scalar `f` with central finite
// differences. Error per coordinate is |analytic - numeric| / max(1, |numeric|).
// `f` must be deterministic (dropout off) and read the parameters in place.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<NamedTensor> params,
                           const GradCheckOptions& options);

}  // namespace smoe::num

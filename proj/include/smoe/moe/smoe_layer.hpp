#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smoe/moe/gating.hpp"
#include "smoe/nn/blocks.hpp"

namespace smoe::moe {

using nn::FFNParams;
using num::Tensor;

// Rows of a packed input that share one gate.
struct RowGroup {
  GateVector gate;
  std::vector<std::size_t> rows;
};

// Bank of identically shaped FFN experts with per-expert invocation counters.
// An expert whose gate weight is zero is never evaluated, so counters double
// as proof of skipped compute. Counters are instrumentation: they are not
// parameters and are not checkpointed.
class SMoELayer {
 public:
  explicit SMoELayer(std::vector<FFNParams> experts);

  std::size_t num_experts() const { return experts_.size(); }
  const FFNParams& expert(std::size_t i) const { return experts_.at(i); }
  FFNParams& expert(std::size_t i) { return experts_.at(i); }

  std::span<const std::uint64_t> call_counts() const { return call_counts_; }
  // Rows each expert has processed, summed over calls.
  std::span<const std::uint64_t> row_counts() const { return row_counts_; }
  void reset_call_counts();

  // Output of the single expert the gate selects.
  Tensor forward(const GateVector& gate, const Tensor& x);
  // Routes each row group to its expert; every expert runs at most once, on
  // the rows of all groups that select it.
  Tensor forward_routed(const Tensor& x, const std::vector<RowGroup>& groups);

  std::size_t expert_param_count() const { return experts_.front().param_count(); }
  void for_each_param(const std::string& prefix, const nn::ParamVisitor& visit);

 private:
  void check_gate(const GateVector& gate) const;
  Tensor run_expert(std::size_t k, const Tensor& x);

  std::vector<FFNParams> experts_;
  std::vector<std::uint64_t> call_counts_;
  std::vector<std::uint64_t> row_counts_;
};

inline Tensor smoe_forward(SMoELayer& layer, const GateVector& gate, const Tensor& x) {
  return layer.forward(gate, x);
}

// n deep copies of `shared`, counters zeroed.
SMoELayer clone_expert_bank(const FFNParams& shared, std::size_t n);

}  // namespace smoe::moe

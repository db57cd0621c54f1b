#include "smoe/moe/smoe_layer.hpp"

#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe::moe {

SMoELayer::SMoELayer(std::vector<FFNParams> experts) : experts_(std::move(experts)) {
  if (experts_.empty()) throw ConfigError("an S-MoE layer needs at least one expert");
  const auto& first = experts_.front();
  for (const auto& e : experts_) {
    if (e.d_model() != first.d_model() || e.d_ff() != first.d_ff() || e.glu != first.glu) {
      throw ConfigError("all experts of an S-MoE layer must share d_model, d_ff and the GLU flag");
    }
  }
  call_counts_.assign(experts_.size(), 0);
  row_counts_.assign(experts_.size(), 0);
}

void SMoELayer::reset_call_counts() {
  std::fill(call_counts_.begin(), call_counts_.end(), 0);
  std::fill(row_counts_.begin(), row_counts_.end(), 0);
}

void SMoELayer::check_gate(const GateVector& gate) const {
  if (gate.size() != experts_.size()) {
    throw RoutingError(fmt::format("gate over {} experts applied to a bank of {}", gate.size(),
                                   experts_.size()));
  }
}

Tensor SMoELayer::run_expert(std::size_t k, const Tensor& x) {
  ++call_counts_[k];
  row_counts_[k] += x.rows();
  return nn::ffn_forward(experts_[k], x);
}

Tensor SMoELayer::forward(const GateVector& gate, const Tensor& x) {
  check_gate(gate);
  // One-hot gate: the weighted sum reduces to the selected expert, and the
  // zero-weight experts are skipped outright.
  return run_expert(gate.selected(), x);
}

Tensor SMoELayer::forward_routed(const Tensor& x, const std::vector<RowGroup>& groups) {
  std::vector<std::vector<std::size_t>> rows_for(experts_.size());
  for (const auto& g : groups) {
    check_gate(g.gate);
    auto& dst = rows_for[g.gate.selected()];
    dst.insert(dst.end(), g.rows.begin(), g.rows.end());
  }
  std::vector<Tensor> parts;
  std::vector<std::vector<std::size_t>> part_rows;
  for (std::size_t k = 0; k < experts_.size(); ++k) {
    if (rows_for[k].empty()) continue;
    // Whole input in natural order: no gather, identical to forward().
    bool identity = rows_for[k].size() == x.rows();
    for (std::size_t i = 0; identity && i < rows_for[k].size(); ++i) identity = rows_for[k][i] == i;
    if (identity) return run_expert(k, x);
    parts.push_back(run_expert(k, num::gather_rows(x, rows_for[k])));
    part_rows.push_back(std::move(rows_for[k]));
  }
  if (parts.empty()) throw RoutingError("forward_routed: no rows were routed");
  return num::scatter_rows(parts, part_rows, x.rows());
}

void SMoELayer::for_each_param(const std::string& prefix, const nn::ParamVisitor& visit) {
  for (std::size_t k = 0; k < experts_.size(); ++k) {
    experts_[k].for_each_param(fmt::format("{}expert{}.", prefix, k), visit);
  }
}

SMoELayer clone_expert_bank(const FFNParams& shared, std::size_t n) {
  if (n < 1) throw ConfigError("clone_expert_bank: need at least one expert");
  std::vector<FFNParams> experts;
  experts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) experts.push_back(shared.clone());
  return SMoELayer(std::move(experts));
}

}  // namespace smoe::moe

#include "smoe/numerics/tape.hpp"

#include "smoe/error.hpp"

namespace smoe::num {

namespace {
thread_local Tape* g_active = nullptr;
}

Tape::Tape() : previous_(g_active) { g_active = this; }

Tape::~Tape() {
  if (g_active == this) g_active = previous_;
}

Tape* Tape::active() { return g_active; }

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  nodes_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

bool Tape::contains_output(const Tensor& t) const {
  for (const auto& n : nodes_) {
    if (n.output.same_storage(t)) return true;
  }
  return false;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward needs a scalar loss");
  }
  if (!contains_output(loss)) {
    throw ContractError("backward: loss was not produced on this tape");
  }
  Tensor seed = loss;
  seed.grad_buffer()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // not on a path to the loss
    it->backward(it->output.grad());
  }
}

NoGradScope::NoGradScope() : saved_(g_active) { g_active = nullptr; }
NoGradScope::~NoGradScope() { g_active = saved_; }

}  // namespace smoe::num

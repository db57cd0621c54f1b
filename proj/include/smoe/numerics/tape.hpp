#pragma once

#include <functional>
#include <span>
#include <vector>

#include "smoe/numerics/tensor.hpp"

namespace smoe::num {

// Define-by-run autodiff record. Constructing a Tape makes it the active tape
// for the current thread; operations whose inputs require gradients append a
// node to it. The tape is discarded after each backward pass.
//
// Nodes are appended in execution order, so the list is already topologically
// sorted and backward is a single reverse sweep that visits each node once.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Innermost live tape on this thread, or nullptr (inference: nothing recorded).
  static Tape* active();

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);
  std::size_t size() const { return nodes_.size(); }
  bool contains_output(const Tensor& t) const;

  // Populates grad() of every requires_grad tensor reachable from `loss`.
  void backward(const Tensor& loss);

 private:
  std::vector<Node> nodes_;
  Tape* previous_ = nullptr;
};

inline void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

// Suspends recording for its lifetime (inference inside a training step).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* saved_;
};

}  // namespace smoe::num

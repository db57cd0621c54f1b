#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace smoe::moe {

// Pre-labelled audio condition of an input.
enum class Bandwidth { NB, WB };
// Target task, carried by the task tag of the target sequence.
enum class Task { ASR, ST };

std::string to_string(Bandwidth bw);
std::string to_string(Task task);
Bandwidth parse_bandwidth(const std::string& s);
Task parse_task(const std::string& s);

// Predefined routing weights over the expert bank. Only hard routing is
// representable: construction rejects anything that is not exactly one-hot.
class GateVector {
 public:
  explicit GateVector(std::vector<double> weights);
  static GateVector one_hot(std::size_t n, std::size_t selected);

  std::size_t size() const { return weights_.size(); }
  std::size_t selected() const { return selected_; }
  std::span<const double> weights() const { return weights_; }
  double operator[](std::size_t i) const { return weights_[i]; }

  friend bool operator==(const GateVector& a, const GateVector& b) { return a.weights_ == b.weights_; }

 private:
  std::vector<double> weights_;
  std::size_t selected_ = 0;
};

// Encoder routing by bandwidth: WB -> expert 0, NB -> expert 1.
GateVector gate_encoder(Bandwidth bw);
// Decoder routing by task: ST -> expert 0, ASR -> expert 1.
GateVector gate_decoder(Task task);

}  // namespace smoe::moe

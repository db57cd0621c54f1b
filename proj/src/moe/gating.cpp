#include "smoe/moe/gating.hpp"

#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe::moe {

std::string to_string(Bandwidth bw) { return bw == Bandwidth::NB ? "NB" : "WB"; }
std::string to_string(Task task) { return task == Task::ASR ? "ASR" : "ST"; }

Bandwidth parse_bandwidth(const std::string& s) {
  if (s == "NB" || s == "nb") return Bandwidth::NB;
  if (s == "WB" || s == "wb") return Bandwidth::WB;
  throw ConfigError("unknown bandwidth `" + s + "` (expected NB or WB)");
}

Task parse_task(const std::string& s) {
  if (s == "ASR" || s == "asr") return Task::ASR;
  if (s == "ST" || s == "st") return Task::ST;
  throw ConfigError("unknown task `" + s + "` (expected ASR or ST)");
}

GateVector::GateVector(std::vector<double> weights) : weights_(std::move(weights)) {
  std::size_t ones = 0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i] == 1.0) {
      ++ones;
      selected_ = i;
    } else if (weights_[i] != 0.0) {
      throw RoutingError(fmt::format("gate weight {} at expert {} is not 0 or 1", weights_[i], i));
    }
  }
  if (ones != 1) {
    throw RoutingError(fmt::format("gate over {} experts selects {} experts; exactly one required",
                                   weights_.size(), ones));
  }
}

GateVector GateVector::one_hot(std::size_t n, std::size_t selected) {
  if (selected >= n) throw RoutingError(fmt::format("expert {} out of range for {} experts", selected, n));
  std::vector<double> w(n, 0.0);
  w[selected] = 1.0;
  return GateVector(std::move(w));
}

GateVector gate_encoder(Bandwidth bw) {
  return bw == Bandwidth::WB ? GateVector({1.0, 0.0}) : GateVector({0.0, 1.0});
}

GateVector gate_decoder(Task task) {
  return task == Task::ST ? GateVector({1.0, 0.0}) : GateVector({0.0, 1.0});
}

}  // namespace smoe::moe

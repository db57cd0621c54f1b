#include <gtest/gtest.h>

#include "smoe/error.hpp"
#include "smoe/moe/smoe_layer.hpp"
#include "smoe/numerics/ops.hpp"
#include "smoe/numerics/tape.hpp"
#include "test_util.hpp"

namespace smoe::moe {
namespace {

using num::Tensor;
using testing::random_tensor;

SMoELayer make_layer(Rng& rng, std::size_t n = 2, std::size_t d = 6, std::size_t f = 5) {
  std::vector<FFNParams> experts;
  for (std::size_t k = 0; k < n; ++k) experts.push_back(FFNParams::init(d, f, true, nn::Activation::SiLU, rng));
  return SMoELayer(std::move(experts));
}

TEST(Gating, TruthTable) {
  EXPECT_EQ(gate_encoder(Bandwidth::WB), GateVector({1.0, 0.0}));
  EXPECT_EQ(gate_encoder(Bandwidth::NB), GateVector({0.0, 1.0}));
  EXPECT_EQ(gate_decoder(Task::ST), GateVector({1.0, 0.0}));
  EXPECT_EQ(gate_decoder(Task::ASR), GateVector({0.0, 1.0}));
}

TEST(Gating, OnlyExactOneHotIsRepresentable) {
  EXPECT_THROW(GateVector({0.5, 0.5}), RoutingError);
  EXPECT_THROW(GateVector({0.0, 0.0}), RoutingError);
  EXPECT_THROW(GateVector({1.0, 1.0}), RoutingError);
  EXPECT_THROW(GateVector({}), RoutingError);
  EXPECT_EQ(GateVector::one_hot(3, 2).selected(), 2u);
  EXPECT_THROW(GateVector::one_hot(2, 2), RoutingError);
}

TEST(Gating, LabelParsing) {
  EXPECT_EQ(parse_bandwidth(to_string(Bandwidth::NB)), Bandwidth::NB);
  EXPECT_EQ(parse_task(to_string(Task::ST)), Task::ST);
  EXPECT_THROW(parse_bandwidth("SWB"), ConfigError);
  EXPECT_THROW(parse_task("mt"), ConfigError);
}

TEST(SMoELayer, ConstructionChecks) {
  auto rng = make_rng(1, "test");
  EXPECT_THROW(SMoELayer({}), ConfigError);
  std::vector<FFNParams> mismatched;
  mismatched.push_back(FFNParams::init(4, 4, true, nn::Activation::SiLU, rng));
  mismatched.push_back(FFNParams::init(4, 6, true, nn::Activation::SiLU, rng));
  EXPECT_THROW(SMoELayer(std::move(mismatched)), ConfigError);
}

TEST(SMoELayer, OutputIsSelectedExpertAndOthersAreSkipped) {
  auto rng = make_rng(2, "test");
  auto layer = make_layer(rng);
  const auto x = random_tensor({3, 6}, rng, 1.0, false);
  for (std::size_t k = 0; k < 2; ++k) {
    layer.reset_call_counts();
    const auto y = layer.forward(GateVector::one_hot(2, k), x);
    EXPECT_TRUE(y.bitwise_equal(nn::ffn_forward(layer.expert(k), x)));
    EXPECT_EQ(layer.call_counts()[k], 1u);
    EXPECT_EQ(layer.call_counts()[1 - k], 0u);
  }
  EXPECT_THROW(layer.forward(GateVector::one_hot(3, 0), x), RoutingError);
}

TEST(SMoELayer, RoutedRowsMatchPerRowForwardAndCallEachExpertOnce) {
  auto rng = make_rng(3, "test");
  auto layer = make_layer(rng);
  const auto x = random_tensor({5, 6}, rng, 1.0, false);
  const std::vector<RowGroup> groups = {{GateVector::one_hot(2, 1), {0, 3}}, {GateVector::one_hot(2, 0), {1, 2, 4}}};
  const auto y = layer.forward_routed(x, groups);
  EXPECT_EQ(layer.call_counts()[0], 1u);
  EXPECT_EQ(layer.call_counts()[1], 1u);
  for (const auto& g : groups) {
    for (auto r : g.rows) {
      const auto row = nn::ffn_forward(layer.expert(g.gate.selected()), num::slice_rows(x, r, r + 1));
      for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(y.at(r, c), row[c]);
    }
  }
}

TEST(SMoELayer, InactiveExpertReceivesNoGradient) {
  auto rng = make_rng(4, "test");
  auto layer = make_layer(rng);
  auto x = random_tensor({4, 6}, rng);
  {
    num::Tape tape;
    const auto y = layer.forward(gate_decoder(Task::ASR), x);
    tape.backward(num::sum(num::mul(y, y)));
  }
  bool active_has_grad = false;
  layer.expert(1).for_each_param("", [&](const std::string&, Tensor& t) { active_has_grad |= t.has_grad(); });
  EXPECT_TRUE(active_has_grad);
  layer.expert(0).for_each_param("", [&](const std::string& name, Tensor& t) {
    if (!t.has_grad()) return;
    for (double g : t.grad()) EXPECT_EQ(g, 0.0) << name;
  });
}

TEST(SMoELayer, ClonedBankReproducesSharedFfn) {
  auto rng = make_rng(5, "test");
  const auto shared = FFNParams::init(6, 7, true, nn::Activation::SiLU, rng);
  auto bank = clone_expert_bank(shared, 2);
  const auto x = random_tensor({3, 6}, rng, 1.0, false);
  const auto ref = nn::ffn_forward(shared, x);
  EXPECT_TRUE(bank.forward(GateVector::one_hot(2, 0), x).bitwise_equal(ref));
  EXPECT_TRUE(bank.forward(GateVector::one_hot(2, 1), x).bitwise_equal(ref));
  bank.expert(1).w_in.mutable_data()[0] += 1.0;
  EXPECT_NE(shared.w_in[0], bank.expert(1).w_in[0]);
  EXPECT_THROW(clone_expert_bank(shared, 0), ConfigError);
}

TEST(SMoELayer, ParameterNamesIdentifyExperts) {
  auto rng = make_rng(6, "test");
  auto layer = make_layer(rng);
  std::vector<std::string> names;
  layer.for_each_param("dec.ffn.", [&](const std::string& n, Tensor&) { names.push_back(n); });
  EXPECT_EQ(names.front(), "dec.ffn.expert0.w_in");
  EXPECT_EQ(names.back(), "dec.ffn.expert1.b_out");
  EXPECT_EQ(layer.expert_param_count(), nn::ffn_param_count(6, 5, true));
}

}  // namespace
}  // namespace smoe::moe

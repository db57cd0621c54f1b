#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "smoe/numerics/ops.hpp"
#include "smoe/numerics/tensor.hpp"
#include "smoe/util/random.hpp"

namespace smoe::nn {

using num::Tensor;

using ParamVisitor = std::function<void(const std::string& name, Tensor& param)>;
using ConstParamVisitor = std::function<void(const std::string& name, const Tensor& param)>;

enum class Activation { SiLU, ReLU, Identity };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation act);
Tensor activate(const Tensor& x, Activation act);

// Training flag plus the dropout stream. Eval mode never touches the rng.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  static ForwardContext eval() { return {}; }
};

Tensor apply_dropout(const Tensor& x, const ForwardContext& ctx);

// Position-wise feedforward network; also the parameter set of one expert.
struct FFNParams {
  Tensor w_in, b_in;
  Tensor w_gate, b_gate;  // defined iff glu
  Tensor w_out, b_out;
  bool glu = true;
  Activation act = Activation::SiLU;

  static FFNParams init(std::size_t d_model, std::size_t d_ff, bool glu, Activation act, Rng& rng);
  static FFNParams zeros(std::size_t d_model, std::size_t d_ff, bool glu, Activation act);

  std::size_t d_model() const { return w_in.rows(); }
  std::size_t d_ff() const { return w_in.cols(); }
  std::size_t param_count() const;
  FFNParams clone() const;
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
};

// d_model·d_ff·(3 with GLU, else 2) weights plus d_ff·(2 or 1) + d_model biases.
std::size_t ffn_param_count(std::size_t d_model, std::size_t d_ff, bool glu);

// glu: (act(x·w_in + b_in) ∘ (x·w_gate + b_gate))·w_out + b_out
// else: act(x·w_in + b_in)·w_out + b_out
Tensor ffn_forward(const FFNParams& p, const Tensor& x);

struct AttentionParams {
  Tensor w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  std::size_t n_heads = 1;

  static AttentionParams init(std::size_t d_model, std::size_t n_heads, Rng& rng);
  std::size_t d_model() const { return w_q.rows(); }
  std::size_t head_dim() const { return d_model() / n_heads; }
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
};

std::size_t attention_param_count(std::size_t d_model);

// Visibility matrix [t_q × t_k]; 1 means the query may attend to the key.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allowed;

  static AttentionMask full(std::size_t t_q, std::size_t t_k);
  static AttentionMask causal(std::size_t t);
};

// Contiguous row range of one sequence inside a packed [Σt × d] matrix.
struct Segment {
  std::size_t begin = 0;
  std::size_t length = 0;
};

// Scaled dot-product multi-head attention over one query/key sequence pair.
Tensor attention_forward(const AttentionParams& p, const Tensor& q_in, const Tensor& k_in,
                         const Tensor& v_in, const AttentionMask& mask);

// Per-head attention probabilities [t_q × t_k] for inspection.
std::vector<Tensor> attention_weights(const AttentionParams& p, const Tensor& q_in,
                                      const Tensor& k_in, const AttentionMask& mask);

// Attention for a batch of independent sequences packed row-wise. Query
// segment i attends only to key segment i; `causal` applies within segments.
Tensor attention_packed(const AttentionParams& p, const Tensor& q_in,
                        const std::vector<Segment>& q_segments, const Tensor& kv_in,
                        const std::vector<Segment>& kv_segments, bool causal);

struct LayerNormParams {
  Tensor gain, bias;
  double epsilon = 1e-5;

  static LayerNormParams init(std::size_t d_model, double epsilon = 1e-5);
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
};

Tensor layer_norm_forward(const LayerNormParams& ln, const Tensor& x);

// Row p, channel 2i: sin(p / 10000^(2i/d)); channel 2i+1: cos of the same.
Tensor sinusoidal_positions(std::size_t t, std::size_t d_model);

// x + dropout(block(layer_norm(x))).
Tensor pre_norm_residual(const std::function<Tensor(const Tensor&)>& block,
                         const LayerNormParams& ln, const Tensor& x, const ForwardContext& ctx);

// Matrix of N(0, 1/fan_in) entries; the default initialiser for projections.
Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace smoe::nn

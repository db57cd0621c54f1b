#include "smoe/nn/blocks.hpp"

#include <cmath>

#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe::nn {

using namespace smoe::num;

Activation parse_activation(const std::string& name) {
  if (name == "silu") return Activation::SiLU;
  if (name == "relu") return Activation::ReLU;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation `" + name + "` (expected silu, relu or identity)");
}

std::string activation_name(Activation act) {
  switch (act) {
    case Activation::SiLU: return "silu";
    case Activation::ReLU: return "relu";
    case Activation::Identity: return "identity";
  }
  return "silu";
}

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::SiLU: return silu(x);
    case Activation::ReLU: return relu(x);
    case Activation::Identity: return x;
  }
  return x;
}

Tensor apply_dropout(const Tensor& x, const ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout <= 0.0) return x;
  if (!ctx.rng) throw ContractError("training-mode dropout without an rng");
  return dropout(x, ctx.dropout, *ctx.rng);
}

Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = dist(rng);
  return Tensor({fan_in, fan_out}, std::move(w), true);
}

namespace {

Tensor zero_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

void check_dims(std::size_t d_model, std::size_t d_ff) {
  if (d_model == 0 || d_ff == 0) {
    throw ConfigError(fmt::format("FFN dims must be positive (d_model={}, d_ff={})", d_model, d_ff));
  }
}

}  // namespace

// --- feedforward -----------------------------------------------------------

std::size_t ffn_param_count(std::size_t d_model, std::size_t d_ff, bool glu) {
  return d_model * d_ff * (glu ? 3 : 2) + d_ff * (glu ? 2 : 1) + d_model;
}

FFNParams FFNParams::init(std::size_t d_model, std::size_t d_ff, bool glu, Activation act,
                          Rng& rng) {
  check_dims(d_model, d_ff);
  FFNParams p;
  p.glu = glu;
  p.act = act;
  p.w_in = init_weight(d_model, d_ff, rng);
  p.b_in = zero_param({d_ff});
  if (glu) {
    p.w_gate = init_weight(d_model, d_ff, rng);
    p.b_gate = zero_param({d_ff});
  }
  p.w_out = init_weight(d_ff, d_model, rng);
  p.b_out = zero_param({d_model});
  return p;
}

FFNParams FFNParams::zeros(std::size_t d_model, std::size_t d_ff, bool glu, Activation act) {
  check_dims(d_model, d_ff);
  FFNParams p;
  p.glu = glu;
  p.act = act;
  p.w_in = zero_param({d_model, d_ff});
  p.b_in = zero_param({d_ff});
  if (glu) {
    p.w_gate = zero_param({d_model, d_ff});
    p.b_gate = zero_param({d_ff});
  }
  p.w_out = zero_param({d_ff, d_model});
  p.b_out = zero_param({d_model});
  return p;
}

std::size_t FFNParams::param_count() const { return ffn_param_count(d_model(), d_ff(), glu); }

FFNParams FFNParams::clone() const {
  FFNParams p;
  p.glu = glu;
  p.act = act;
  p.w_in = w_in.clone();
  p.b_in = b_in.clone();
  p.w_gate = w_gate.clone();
  p.b_gate = b_gate.clone();
  p.w_out = w_out.clone();
  p.b_out = b_out.clone();
  return p;
}

void FFNParams::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + "w_in", w_in);
  visit(prefix + "b_in", b_in);
  if (glu) {
    visit(prefix + "w_gate", w_gate);
    visit(prefix + "b_gate", b_gate);
  }
  visit(prefix + "w_out", w_out);
  visit(prefix + "b_out", b_out);
}

Tensor ffn_forward(const FFNParams& p, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != p.d_model()) {
    throw ShapeError(fmt::format("ffn_forward: input {} for d_model {}", shape_string(x.shape()),
                                 p.d_model()));
  }
  Tensor h = activate(add_bias(matmul(x, p.w_in), p.b_in), p.act);
  if (p.glu) h = mul(h, add_bias(matmul(x, p.w_gate), p.b_gate));
  return add_bias(matmul(h, p.w_out), p.b_out);
}

// --- attention -------------------------------------------------------------

std::size_t attention_param_count(std::size_t d_model) { return 4 * d_model * d_model + 4 * d_model; }

AttentionParams AttentionParams::init(std::size_t d_model, std::size_t n_heads, Rng& rng) {
  if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) {
    throw ConfigError(fmt::format("d_model {} must be a positive multiple of n_heads {}", d_model,
                                  n_heads));
  }
  AttentionParams p;
  p.n_heads = n_heads;
  p.w_q = init_weight(d_model, d_model, rng);
  p.w_k = init_weight(d_model, d_model, rng);
  p.w_v = init_weight(d_model, d_model, rng);
  p.w_o = init_weight(d_model, d_model, rng);
  p.b_q = zero_param({d_model});
  p.b_k = zero_param({d_model});
  p.b_v = zero_param({d_model});
  p.b_o = zero_param({d_model});
  return p;
}

void AttentionParams::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + "w_q", w_q);
  visit(prefix + "b_q", b_q);
  visit(prefix + "w_k", w_k);
  visit(prefix + "b_k", b_k);
  visit(prefix + "w_v", w_v);
  visit(prefix + "b_v", b_v);
  visit(prefix + "w_o", w_o);
  visit(prefix + "b_o", b_o);
}

AttentionMask AttentionMask::full(std::size_t t_q, std::size_t t_k) {
  return {t_q, t_k, std::vector<std::uint8_t>(t_q * t_k, 1)};
}

AttentionMask AttentionMask::causal(std::size_t t) {
  AttentionMask m{t, t, std::vector<std::uint8_t>(t * t, 0)};
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m.allowed[i * t + j] = 1;
  }
  return m;
}

namespace {

struct Projected {
  Tensor q, k, v;
};

Projected project(const AttentionParams& p, const Tensor& q_in, const Tensor& k_in,
                  const Tensor& v_in) {
  const auto d = p.d_model();
  for (const Tensor* t : {&q_in, &k_in, &v_in}) {
    if (t->rank() != 2 || t->cols() != d) {
      throw ShapeError(fmt::format("attention: input {} for d_model {}", shape_string(t->shape()), d));
    }
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.head_dim()));
  Projected out;
  out.q = scale(add_bias(matmul(q_in, p.w_q), p.b_q), inv_sqrt);
  out.k = add_bias(matmul(k_in, p.w_k), p.b_k);
  out.v = add_bias(matmul(v_in, p.w_v), p.b_v);
  return out;
}

// Probabilities for one (query segment, key segment, head) triple.
Tensor head_probs(const Projected& pr, std::size_t head, std::size_t dh, const Segment& qs,
                  const Segment& ks, std::span<const std::uint8_t> allowed) {
  Tensor qh = slice(pr.q, qs.begin, qs.begin + qs.length, head * dh, (head + 1) * dh);
  Tensor kh = slice(pr.k, ks.begin, ks.begin + ks.length, head * dh, (head + 1) * dh);
  return masked_softmax(matmul_nt(qh, kh), allowed);
}

Tensor attend(const AttentionParams& p, const Projected& pr,
              const std::vector<Segment>& q_segments, const std::vector<Segment>& kv_segments,
              const std::function<std::span<const std::uint8_t>(std::size_t)>& mask_for) {
  const auto dh = p.head_dim();
  std::vector<Tensor> per_segment;
  per_segment.reserve(q_segments.size());
  for (std::size_t s = 0; s < q_segments.size(); ++s) {
    const auto& qs = q_segments[s];
    const auto& ks = kv_segments[s];
    const auto allowed = mask_for(s);
    std::vector<Tensor> heads;
    heads.reserve(p.n_heads);
    for (std::size_t h = 0; h < p.n_heads; ++h) {
      Tensor probs = head_probs(pr, h, dh, qs, ks, allowed);
      Tensor vh = slice(pr.v, ks.begin, ks.begin + ks.length, h * dh, (h + 1) * dh);
      heads.push_back(matmul(probs, vh));
    }
    per_segment.push_back(concat_cols(heads));
  }
  return add_bias(matmul(concat_rows(per_segment), p.w_o), p.b_o);
}

void check_mask(const AttentionMask& mask, std::size_t t_q, std::size_t t_k) {
  if (mask.rows != t_q || mask.cols != t_k || mask.allowed.size() != t_q * t_k) {
    throw ShapeError(fmt::format("attention mask [{}x{}] does not cover scores [{}x{}]", mask.rows,
                                 mask.cols, t_q, t_k));
  }
}

}  // namespace

Tensor attention_forward(const AttentionParams& p, const Tensor& q_in, const Tensor& k_in,
                         const Tensor& v_in, const AttentionMask& mask) {
  if (k_in.rows() != v_in.rows()) throw ShapeError("attention: keys and values differ in length");
  check_mask(mask, q_in.rows(), k_in.rows());
  auto pr = project(p, q_in, k_in, v_in);
  return attend(p, pr, {{0, q_in.rows()}}, {{0, k_in.rows()}},
                [&](std::size_t) { return std::span<const std::uint8_t>(mask.allowed); });
}

std::vector<Tensor> attention_weights(const AttentionParams& p, const Tensor& q_in,
                                      const Tensor& k_in, const AttentionMask& mask) {
  check_mask(mask, q_in.rows(), k_in.rows());
  auto pr = project(p, q_in, k_in, k_in);
  std::vector<Tensor> out;
  for (std::size_t h = 0; h < p.n_heads; ++h) {
    out.push_back(head_probs(pr, h, p.head_dim(), {0, q_in.rows()}, {0, k_in.rows()}, mask.allowed));
  }
  return out;
}

Tensor attention_packed(const AttentionParams& p, const Tensor& q_in,
                        const std::vector<Segment>& q_segments, const Tensor& kv_in,
                        const std::vector<Segment>& kv_segments, bool causal) {
  if (q_segments.size() != kv_segments.size() || q_segments.empty()) {
    throw ShapeError("attention_packed: query and key segment lists disagree");
  }
  std::vector<std::vector<std::uint8_t>> masks(q_segments.size());
  for (std::size_t s = 0; s < q_segments.size(); ++s) {
    const auto tq = q_segments[s].length, tk = kv_segments[s].length;
    if (tq == 0 || tk == 0) throw ShapeError("attention_packed: empty segment");
    if (causal) {
      if (tq != tk) throw ShapeError("attention_packed: causal attention needs square segments");
      masks[s] = AttentionMask::causal(tq).allowed;
    }
  }
  auto pr = project(p, q_in, kv_in, kv_in);
  return attend(p, pr, q_segments, kv_segments,
                [&](std::size_t s) { return std::span<const std::uint8_t>(masks[s]); });
}

// --- normalisation and positions -------------------------------------------

LayerNormParams LayerNormParams::init(std::size_t d_model, double epsilon) {
  if (epsilon <= 0.0) throw ConfigError("layer-norm epsilon must be positive");
  return {Tensor::filled({d_model}, 1.0, true), zero_param({d_model}), epsilon};
}

void LayerNormParams::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + "gain", gain);
  visit(prefix + "bias", bias);
}

Tensor layer_norm_forward(const LayerNormParams& ln, const Tensor& x) {
  return layer_norm(x, ln.gain, ln.bias, ln.epsilon);
}

Tensor sinusoidal_positions(std::size_t t, std::size_t d_model) {
  if (t == 0 || d_model == 0) throw ConfigError("sinusoidal_positions: sizes must be positive");
  if (d_model % 2 != 0) {
    throw ConfigError(fmt::format("sinusoidal_positions: d_model {} must be even", d_model));
  }
  std::vector<double> out(t * d_model);
  for (std::size_t pos = 0; pos < t; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) / freq;
      out[pos * d_model + 2 * i] = std::sin(angle);
      out[pos * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor({t, d_model}, std::move(out));
}

Tensor pre_norm_residual(const std::function<Tensor(const Tensor&)>& block,
                         const LayerNormParams& ln, const Tensor& x, const ForwardContext& ctx) {
  return add(x, apply_dropout(block(layer_norm_forward(ln, x)), ctx));
}

}  // namespace smoe::nn

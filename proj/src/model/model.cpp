#include "smoe/model/model.hpp"

#include <cmath>

#include <fmt/core.h>

#include "smoe/error.hpp"
#include "smoe/numerics/ops.hpp"

namespace smoe::model {

namespace {

using num::add;
using num::add_bias;

FeedForward make_ffn(const ModelConfig& c, std::size_t d_ff, bool smoe, Rng& rng) {
  auto shared = nn::FFNParams::init(c.d_model, d_ff, c.glu, c.activation, rng);
  if (!smoe) return shared;
  std::vector<nn::FFNParams> experts;
  experts.push_back(std::move(shared));
  for (std::size_t k = 1; k < c.n_experts; ++k) {
    experts.push_back(nn::FFNParams::init(c.d_model, d_ff, c.glu, c.activation, rng));
  }
  return moe::SMoELayer(std::move(experts));
}

void visit_ffn(FeedForward& ffn, const std::string& prefix, const nn::ParamVisitor& visit) {
  std::visit([&](auto& f) { f.for_each_param(prefix, visit); }, ffn);
}

void expand(FeedForward& ffn, std::size_t n) {
  if (auto* shared = std::get_if<nn::FFNParams>(&ffn)) {
    ffn = moe::clone_expert_bank(*shared, n);
  } else {
    throw ConfigError("feedforward block already holds an expert bank");
  }
}

// Segments that share a gate are merged into one row group.
std::vector<moe::RowGroup> group_rows(const std::vector<nn::Segment>& segments,
                                      const std::vector<moe::GateVector>& gates) {
  std::vector<moe::RowGroup> groups;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    moe::RowGroup* target = nullptr;
    for (auto& g : groups) {
      if (g.gate == gates[s]) target = &g;
    }
    if (!target) {
      groups.push_back({gates[s], {}});
      target = &groups.back();
    }
    for (std::size_t r = 0; r < segments[s].length; ++r) {
      target->rows.push_back(segments[s].begin + r);
    }
  }
  return groups;
}

std::vector<nn::Segment> segments_of(const std::vector<std::size_t>& lengths) {
  std::vector<nn::Segment> segs;
  std::size_t begin = 0;
  for (auto len : lengths) {
    segs.push_back({begin, len});
    begin += len;
  }
  return segs;
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  if ((config_.enc_smoe || config_.dec_smoe) && config_.n_experts != 2) {
    throw ConfigError("S-MoE routing is defined for exactly two experts");
  }
  auto rng = make_rng(init_seed, "init");
  const auto d = config_.d_model;
  input_w_ = nn::init_weight(config_.n_mels, d, rng);
  input_b_ = Tensor::zeros({d}, true);
  for (std::size_t i = 0; i < config_.n_enc_layers; ++i) {
    encoder_.push_back({nn::LayerNormParams::init(d), nn::AttentionParams::init(d, config_.n_heads, rng),
                        nn::LayerNormParams::init(d),
                        make_ffn(config_, config_.d_ff, config_.enc_smoe, rng)});
  }
  encoder_norm_ = nn::LayerNormParams::init(d);

  std::normal_distribution<double> emb(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<double> table(config_.vocab_size * d);
  for (auto& v : table) v = emb(rng);
  embedding_ = Tensor({config_.vocab_size, d}, std::move(table), true);
  if (!config_.tie_embeddings) output_w_ = nn::init_weight(d, config_.vocab_size, rng);
  for (std::size_t i = 0; i < config_.n_dec_layers; ++i) {
    decoder_.push_back({nn::LayerNormParams::init(d), nn::AttentionParams::init(d, config_.n_heads, rng),
                        nn::LayerNormParams::init(d), nn::AttentionParams::init(d, config_.n_heads, rng),
                        nn::LayerNormParams::init(d),
                        make_ffn(config_, config_.decoder_d_ff(), config_.dec_smoe, rng)});
  }
  decoder_norm_ = nn::LayerNormParams::init(d);
  position_table_ =
      nn::sinusoidal_positions(std::max(config_.max_src_frames, config_.max_tgt_tokens), d);
}

Model Model::clone() const {
  Model copy(config_, 0);
  auto& self = const_cast<Model&>(*this);
  std::vector<Tensor> source;
  self.for_each_param([&](const std::string&, Tensor& p) { source.push_back(p); });
  std::size_t i = 0;
  copy.for_each_param([&](const std::string&, Tensor& p) {
    const auto src = source.at(i++).data();
    std::copy(src.begin(), src.end(), p.mutable_data().begin());
  });
  return copy;
}

Tensor Model::positions(const std::vector<nn::Segment>& segments) {
  const auto d = config_.d_model;
  std::size_t total = 0;
  for (const auto& s : segments) total += s.length;
  std::vector<double> out(total * d);
  const auto table = position_table_.data();
  for (const auto& s : segments) {
    std::copy_n(table.begin(), s.length * d, out.begin() + static_cast<std::ptrdiff_t>(s.begin * d));
  }
  return Tensor({total, d}, std::move(out));
}

Tensor Model::feed_forward(FeedForward& ffn, const Tensor& x, const std::vector<moe::RowGroup>& groups) {
  if (auto* shared = std::get_if<nn::FFNParams>(&ffn)) return nn::ffn_forward(*shared, x);
  return std::get<moe::SMoELayer>(ffn).forward_routed(x, groups);
}

EncoderOutput Model::encode(const std::vector<Tensor>& features, std::span<const Bandwidth> bandwidths,
                            const ForwardContext& ctx) {
  if (features.empty() || features.size() != bandwidths.size()) {
    throw ContractError("encode: need one bandwidth per feature matrix");
  }
  std::vector<std::size_t> lengths;
  std::size_t total = 0;
  for (const auto& f : features) {
    if (f.rank() != 2 || f.cols() != config_.n_mels) {
      throw ShapeError(fmt::format("encode: expected [T x {}] features, got {}", config_.n_mels,
                                   num::shape_string(f.shape())));
    }
    if (f.rows() > config_.max_src_frames) {
      throw LimitError(fmt::format("encode: {} frames exceed the limit of {}", f.rows(),
                                   config_.max_src_frames));
    }
    lengths.push_back(f.rows());
    total += f.rows();
  }
  std::vector<double> packed;
  packed.reserve(total * config_.n_mels);
  for (const auto& f : features) {
    for (double v : f.data()) packed.push_back((v - kFeatureOffset) / kFeatureScale);
  }
  const Tensor input({total, config_.n_mels}, std::move(packed));

  EncoderOutput out;
  out.segments = segments_of(lengths);
  std::vector<moe::GateVector> gates;
  for (auto bw : bandwidths) gates.push_back(moe::gate_encoder(bw));
  const auto groups = group_rows(out.segments, gates);

  auto x = add(add_bias(num::matmul(input, input_w_), input_b_), positions(out.segments));
  x = nn::apply_dropout(x, ctx);
  for (auto& layer : encoder_) {
    x = nn::pre_norm_residual(
        [&](const Tensor& h) { return nn::attention_packed(layer.self_attn, h, out.segments, h, out.segments, false); },
        layer.ln_attn, x, ctx);
    x = nn::pre_norm_residual([&](const Tensor& h) { return feed_forward(layer.ffn, h, groups); },
                              layer.ln_ffn, x, ctx);
  }
  out.memory = nn::layer_norm_forward(encoder_norm_, x);
  return out;
}

Tensor Model::decode(const EncoderOutput& memory, std::span<const std::size_t> memory_of_row,
                     const std::vector<std::vector<TokenId>>& inputs, std::span<const Task> tasks,
                     const ForwardContext& ctx) {
  if (inputs.empty() || inputs.size() != memory_of_row.size() || inputs.size() != tasks.size()) {
    throw ContractError("decode: need one memory index and task per input row");
  }
  std::vector<std::size_t> lengths;
  std::vector<TokenId> ids;
  std::vector<nn::Segment> kv_segments;
  std::vector<moe::GateVector> gates;
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    const auto& row = inputs[r];
    if (row.empty()) throw ContractError("decode: empty input row");
    if (row.size() > config_.max_tgt_tokens) {
      throw LimitError(fmt::format("decode: {} target tokens exceed the limit of {}", row.size(),
                                   config_.max_tgt_tokens));
    }
    if (memory_of_row[r] >= memory.segments.size()) throw IndexError("decode: memory index out of range");
    lengths.push_back(row.size());
    ids.insert(ids.end(), row.begin(), row.end());
    kv_segments.push_back(memory.segments[memory_of_row[r]]);
    gates.push_back(moe::gate_decoder(tasks[r]));
  }
  const auto segments = segments_of(lengths);
  const auto groups = group_rows(segments, gates);

  auto x = num::scale(num::embedding(embedding_, ids), std::sqrt(static_cast<double>(config_.d_model)));
  x = nn::apply_dropout(add(x, positions(segments)), ctx);
  for (auto& layer : decoder_) {
    x = nn::pre_norm_residual(
        [&](const Tensor& h) { return nn::attention_packed(layer.self_attn, h, segments, h, segments, true); },
        layer.ln_self, x, ctx);
    x = nn::pre_norm_residual(
        [&](const Tensor& h) {
          return nn::attention_packed(layer.cross_attn, h, segments, memory.memory, kv_segments, false);
        },
        layer.ln_cross, x, ctx);
    x = nn::pre_norm_residual([&](const Tensor& h) { return feed_forward(layer.ffn, h, groups); },
                              layer.ln_ffn, x, ctx);
  }
  const auto h = nn::layer_norm_forward(decoder_norm_, x);
  return config_.tie_embeddings ? num::matmul_nt(h, embedding_) : num::matmul(h, output_w_);
}

Tensor Model::forward(const signal::FbankFeatures& features, Bandwidth bw,
                      const seqio::TargetSequence& target, const ForwardContext& ctx) {
  const auto task = seqio::task_of(target);
  const Bandwidth bws[] = {bw};
  const auto memory = encode({features.frames}, bws, ctx);
  const std::size_t rows[] = {0};
  const Task tasks[] = {task};
  return decode(memory, rows, {target.ids}, tasks, ctx);
}

void Model::for_each_param(const nn::ParamVisitor& visit) {
  visit("input.w", input_w_);
  visit("input.b", input_b_);
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    auto& l = encoder_[i];
    const auto p = fmt::format("encoder.{}.", i);
    l.ln_attn.for_each_param(p + "ln_attn.", visit);
    l.self_attn.for_each_param(p + "self_attn.", visit);
    l.ln_ffn.for_each_param(p + "ln_ffn.", visit);
    visit_ffn(l.ffn, p + "ffn.", visit);
  }
  encoder_norm_.for_each_param("encoder.norm.", visit);
  visit("embedding", embedding_);
  if (output_w_.defined()) visit("output.w", output_w_);
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    auto& l = decoder_[i];
    const auto p = fmt::format("decoder.{}.", i);
    l.ln_self.for_each_param(p + "ln_self.", visit);
    l.self_attn.for_each_param(p + "self_attn.", visit);
    l.ln_cross.for_each_param(p + "ln_cross.", visit);
    l.cross_attn.for_each_param(p + "cross_attn.", visit);
    l.ln_ffn.for_each_param(p + "ln_ffn.", visit);
    visit_ffn(l.ffn, p + "ffn.", visit);
  }
  decoder_norm_.for_each_param("decoder.norm.", visit);
}

std::vector<num::NamedTensor> Model::named_params() {
  std::vector<num::NamedTensor> out;
  for_each_param([&](const std::string& name, Tensor& p) { out.push_back({name, p}); });
  return out;
}

std::uint64_t Model::stored_param_count() {
  std::uint64_t n = 0;
  for_each_param([&](const std::string&, Tensor& p) { n += p.size(); });
  return n;
}

std::vector<moe::SMoELayer*> Model::encoder_smoe_layers() {
  std::vector<moe::SMoELayer*> out;
  for (auto& l : encoder_) {
    if (auto* s = std::get_if<moe::SMoELayer>(&l.ffn)) out.push_back(s);
  }
  return out;
}

std::vector<moe::SMoELayer*> Model::decoder_smoe_layers() {
  std::vector<moe::SMoELayer*> out;
  for (auto& l : decoder_) {
    if (auto* s = std::get_if<moe::SMoELayer>(&l.ffn)) out.push_back(s);
  }
  return out;
}

void Model::reset_call_counts() {
  for (auto* s : encoder_smoe_layers()) s->reset_call_counts();
  for (auto* s : decoder_smoe_layers()) s->reset_call_counts();
}

void Model::expand_encoder_experts(std::size_t n) {
  if (n != 2) throw ConfigError("S-MoE routing is defined for exactly two experts");
  for (auto& l : encoder_) expand(l.ffn, n);
  config_.enc_smoe = true;
  config_.n_experts = n;
}

void Model::expand_decoder_experts(std::size_t n) {
  if (n != 2) throw ConfigError("S-MoE routing is defined for exactly two experts");
  for (auto& l : decoder_) expand(l.ffn, n);
  config_.dec_smoe = true;
  config_.n_experts = n;
}

Model expand_from_donor(const Model& donor, const ModelConfig& target) {
  const auto& src = donor.config();
  auto base = target;
  base.enc_smoe = src.enc_smoe;
  base.dec_smoe = src.dec_smoe;
  base.n_experts = src.n_experts;
  if (!(base == src)) {
    throw ConfigError("donor and target configs differ beyond their S-MoE flags");
  }
  if ((src.enc_smoe && !target.enc_smoe) || (src.dec_smoe && !target.dec_smoe)) {
    throw ConfigError("target config drops an expert bank present in the donor");
  }
  auto model = donor.clone();
  if (target.enc_smoe && !src.enc_smoe) model.expand_encoder_experts(target.n_experts);
  if (target.dec_smoe && !src.dec_smoe) model.expand_decoder_experts(target.n_experts);
  return model;
}

}  // namespace smoe::model

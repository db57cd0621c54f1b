#include "smoe/model/config.hpp"

#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe::model {

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.n_enc_layers = 12;
  c.n_dec_layers = 6;
  c.d_model = 512;
  c.d_ff = 2048;
  c.n_heads = 8;
  c.vocab_size = 40000;
  c.dropout = 0.15;
  c.max_src_frames = 3000;
  c.max_tgt_tokens = 120;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (n_enc_layers == 0 || n_dec_layers == 0) fail("layer counts must be positive");
  if (d_model == 0 || d_ff == 0 || n_heads == 0 || vocab_size == 0 || n_mels == 0) {
    fail("dimensions must be positive");
  }
  if (d_model % n_heads != 0) fail(fmt::format("d_model {} not divisible by n_heads {}", d_model, n_heads));
  if (d_model % 2 != 0) fail("d_model must be even for sinusoidal positions");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (n_experts < 1) fail("n_experts must be >= 1");
  if (max_src_frames == 0 || max_tgt_tokens < 4) fail("sequence limits too small");
}

namespace {

std::size_t get_size(const ConfigMap& m, const std::string& key, std::size_t fallback) {
  const auto v = m.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw ConfigError(fmt::format("key `{}` must be non-negative", key));
  return static_cast<std::size_t>(v);
}

}  // namespace

ModelConfig ModelConfig::from_map(const ConfigMap& m) { return from_map(m, toy()); }

ModelConfig ModelConfig::from_map(const ConfigMap& m, const ModelConfig& base) {
  ModelConfig c = base;
  if (m.contains("preset")) {
    const auto preset = m.get_string("preset", "toy");
    if (preset == "full") c = full();
    else if (preset == "toy") c = toy();
    else throw ConfigError("unknown preset `" + preset + "`");
  }
  c.n_enc_layers = get_size(m, "n_enc_layers", c.n_enc_layers);
  c.n_dec_layers = get_size(m, "n_dec_layers", c.n_dec_layers);
  c.d_model = get_size(m, "d_model", c.d_model);
  c.d_ff = get_size(m, "d_ff", c.d_ff);
  c.dec_d_ff = get_size(m, "dec_d_ff", c.dec_d_ff);
  c.n_heads = get_size(m, "n_heads", c.n_heads);
  c.vocab_size = get_size(m, "vocab_size", c.vocab_size);
  c.n_mels = get_size(m, "n_mels", c.n_mels);
  c.dropout = m.get_double("dropout", c.dropout);
  c.glu = m.get_bool("glu", c.glu);
  c.activation = nn::parse_activation(m.get_string("activation", nn::activation_name(c.activation)));
  c.enc_smoe = m.get_bool("enc_smoe", c.enc_smoe);
  c.dec_smoe = m.get_bool("dec_smoe", c.dec_smoe);
  c.n_experts = get_size(m, "n_experts", c.n_experts);
  c.max_src_frames = get_size(m, "max_src_frames", c.max_src_frames);
  c.max_tgt_tokens = get_size(m, "max_tgt_tokens", c.max_tgt_tokens);
  c.tie_embeddings = m.get_bool("tie_embeddings", c.tie_embeddings);
  c.validate();
  return c;
}

std::string ModelConfig::to_text() const {
  std::string out;
  auto line = [&](const char* k, const auto& v) { out += fmt::format("{} = {}\n", k, v); };
  line("n_enc_layers", n_enc_layers);
  line("n_dec_layers", n_dec_layers);
  line("d_model", d_model);
  line("d_ff", d_ff);
  line("dec_d_ff", dec_d_ff);
  line("n_heads", n_heads);
  line("vocab_size", vocab_size);
  line("n_mels", n_mels);
  line("dropout", fmt::format("{:.17g}", dropout));
  line("glu", glu ? 1 : 0);
  line("activation", nn::activation_name(activation));
  line("enc_smoe", enc_smoe ? 1 : 0);
  line("dec_smoe", dec_smoe ? 1 : 0);
  line("n_experts", n_experts);
  line("max_src_frames", max_src_frames);
  line("max_tgt_tokens", max_tgt_tokens);
  line("tie_embeddings", tie_embeddings ? 1 : 0);
  return out;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  auto map = ConfigMap::parse(text, "<model config>");
  auto c = from_map(map);
  map.reject_unknown();
  return c;
}

ParamBreakdown param_breakdown(const ModelConfig& c) {
  const std::uint64_t d = c.d_model;
  const std::uint64_t ln = 2 * d;
  const std::uint64_t attn = nn::attention_param_count(c.d_model);
  const std::uint64_t enc_ffn = nn::ffn_param_count(c.d_model, c.d_ff, c.glu);
  const std::uint64_t dec_ffn = nn::ffn_param_count(c.d_model, c.decoder_d_ff(), c.glu);
  const std::uint64_t enc_copies = c.enc_smoe ? c.n_experts : 1;
  const std::uint64_t dec_copies = c.dec_smoe ? c.n_experts : 1;

  ParamBreakdown b;
  b.input_projection = c.n_mels * d + d;
  b.encoder_attention = c.n_enc_layers * attn;
  b.encoder_ffn = c.n_enc_layers * enc_ffn * enc_copies;
  b.encoder_norms = c.n_enc_layers * 2 * ln + ln;
  b.embedding = c.vocab_size * d;
  b.output_projection = c.tie_embeddings ? 0 : c.vocab_size * d;
  b.decoder_attention = c.n_dec_layers * 2 * attn;
  b.decoder_ffn = c.n_dec_layers * dec_ffn * dec_copies;
  b.decoder_norms = c.n_dec_layers * 3 * ln + ln;
  b.encoder_expert_size = enc_ffn;
  b.decoder_expert_size = dec_ffn;
  b.duplicated = c.n_enc_layers * enc_ffn * (enc_copies - 1) + c.n_dec_layers * dec_ffn * (dec_copies - 1);
  return b;
}

ParamCount count_params(const ModelConfig& c) {
  const auto b = param_breakdown(c);
  ParamCount out;
  out.trainable = b.input_projection + b.encoder_attention + b.encoder_ffn + b.encoder_norms +
                  b.embedding + b.output_projection + b.decoder_attention + b.decoder_ffn +
                  b.decoder_norms;
  out.active = out.trainable - b.duplicated;
  return out;
}

}  // namespace smoe::model

#pragma once

#include <cstdint>
#include <string>

#include "smoe/nn/blocks.hpp"
#include "smoe/util/config_map.hpp"

namespace smoe::model {

struct ModelConfig {
  std::size_t n_enc_layers = 2;
  std::size_t n_dec_layers = 2;
  std::size_t d_model = 64;
  std::size_t d_ff = 128;
  std::size_t dec_d_ff = 0;  // 0: same as d_ff (DecFFNx2 sets 2·d_ff)
  std::size_t n_heads = 4;
  std::size_t vocab_size = 272;
  std::size_t n_mels = 80;
  double dropout = 0.15;
  bool glu = true;
  nn::Activation activation = nn::Activation::SiLU;
  bool enc_smoe = false;
  bool dec_smoe = false;
  std::size_t n_experts = 2;
  std::size_t max_src_frames = 3000;
  std::size_t max_tgt_tokens = 120;
  bool tie_embeddings = true;

  // 2/2 layers, d_model 64, d_ff 128, 4 heads.
  static ModelConfig toy();
  // 12/6 layers, d_model 512, d_ff 2048, 8 heads, vocab 40000, dropout 0.15.
  static ModelConfig full();

  std::size_t decoder_d_ff() const { return dec_d_ff ? dec_d_ff : d_ff; }
  void validate() const;

  // Reads model keys (starting from `preset = toy|full` when present) and
  // marks them used; other keys are left for the caller.
  static ModelConfig from_map(const ConfigMap& map);
  // Same, with unspecified keys taken from `base` unless a preset is named.
  static ModelConfig from_map(const ConfigMap& map, const ModelConfig& base);
  // Every key written explicitly, in the `key = value` grammar.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

struct ParamCount {
  std::uint64_t trainable = 0;
  std::uint64_t active = 0;
};

struct ParamBreakdown {
  std::uint64_t input_projection = 0;
  std::uint64_t encoder_attention = 0;
  std::uint64_t encoder_ffn = 0;  // all expert copies
  std::uint64_t encoder_norms = 0;
  std::uint64_t embedding = 0;
  std::uint64_t output_projection = 0;  // 0 when tied
  std::uint64_t decoder_attention = 0;
  std::uint64_t decoder_ffn = 0;
  std::uint64_t decoder_norms = 0;
  std::uint64_t encoder_expert_size = 0;  // one expert (= one shared FFN)
  std::uint64_t decoder_expert_size = 0;
  std::uint64_t duplicated = 0;  // parameters idle under one-hot routing
};

ParamBreakdown param_breakdown(const ModelConfig& config);
// Closed form. active = trainable - (n_experts - 1) x expert size, summed over
// S-MoE layers.
ParamCount count_params(const ModelConfig& config);

}  // namespace smoe::model

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "smoe/model/config.hpp"
#include "smoe/moe/smoe_layer.hpp"
#include "smoe/nn/blocks.hpp"
#include "smoe/numerics/grad_check.hpp"
#include "smoe/seqio/target.hpp"
#include "smoe/signal/fbank.hpp"

namespace smoe::model {

using moe::Bandwidth;
using moe::Task;
using nn::ForwardContext;
using num::Tensor;
using seqio::TokenId;

// Either one shared FFN (hard parameter sharing) or a supervised expert bank.
using FeedForward = std::variant<nn::FFNParams, moe::SMoELayer>;

struct EncoderLayer {
  nn::LayerNormParams ln_attn;
  nn::AttentionParams self_attn;
  nn::LayerNormParams ln_ffn;
  FeedForward ffn;
};

struct DecoderLayer {
  nn::LayerNormParams ln_self;
  nn::AttentionParams self_attn;
  nn::LayerNormParams ln_cross;
  nn::AttentionParams cross_attn;
  nn::LayerNormParams ln_ffn;
  FeedForward ffn;
};

struct EncoderOutput {
  Tensor memory;  // packed [Σ frames × d_model]
  std::vector<nn::Segment> segments;
};

// Fixed affine normalisation applied to log-Mel input before projection.
constexpr double kFeatureOffset = -3.0;
constexpr double kFeatureScale = 4.0;

// Pre-norm transformer encoder-decoder with optional S-MoE feedforward banks.
// The encoder bank is routed by input bandwidth, the decoder bank by the task
// named in each target's task tag.
//
// Sequences in a batch are packed row-wise; position-wise blocks see the whole
// pack while attention runs per sequence, so a row's result never depends on
// which other rows share the batch.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t init_seed);

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // Deep copy; counters reset.
  Model clone() const;

  const ModelConfig& config() const { return config_; }

  EncoderOutput encode(const std::vector<Tensor>& features, std::span<const Bandwidth> bandwidths,
                       const ForwardContext& ctx);
  // Decoder logits for every input position of every row, packed
  // [Σ t_row × vocab]. Row r cross-attends to memory segment memory_of_row[r]
  // and its FFN is routed by tasks[r].
  Tensor decode(const EncoderOutput& memory, std::span<const std::size_t> memory_of_row,
                const std::vector<std::vector<TokenId>>& inputs, std::span<const Task> tasks,
                const ForwardContext& ctx);

  // Teacher-forced logits [t_tgt × vocab] for one utterance; the decoder is
  // routed by task_of(target).
  Tensor forward(const signal::FbankFeatures& features, Bandwidth bw,
                 const seqio::TargetSequence& target,
                 const ForwardContext& ctx = ForwardContext::eval());

  void for_each_param(const nn::ParamVisitor& visit);
  std::vector<num::NamedTensor> named_params();
  std::uint64_t stored_param_count();

  std::vector<moe::SMoELayer*> encoder_smoe_layers();
  std::vector<moe::SMoELayer*> decoder_smoe_layers();
  void reset_call_counts();

  // Replaces every shared encoder (or decoder) FFN with an n-way bank of
  // copies of it; outputs are unchanged until the copies are trained apart.
  void expand_encoder_experts(std::size_t n);
  void expand_decoder_experts(std::size_t n);

  std::vector<EncoderLayer>& encoder_layers() { return encoder_; }
  std::vector<DecoderLayer>& decoder_layers() { return decoder_; }

 private:
  Tensor positions(const std::vector<nn::Segment>& segments);
  Tensor feed_forward(FeedForward& ffn, const Tensor& x, const std::vector<moe::RowGroup>& groups);

  ModelConfig config_;
  Tensor input_w_, input_b_;
  std::vector<EncoderLayer> encoder_;
  nn::LayerNormParams encoder_norm_;
  Tensor embedding_;
  Tensor output_w_;  // defined iff embeddings are untied
  std::vector<DecoderLayer> decoder_;
  nn::LayerNormParams decoder_norm_;
  Tensor position_table_;
};

// Builds `target` (S-MoE flags and all) from a trained donor whose other
// dimensions agree: donor FFNs are cloned into each new expert bank.
Model expand_from_donor(const Model& donor, const ModelConfig& target);

}  // namespace smoe::model

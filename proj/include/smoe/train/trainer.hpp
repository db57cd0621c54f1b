#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "smoe/model/model.hpp"
#include "smoe/train/batch.hpp"
#include "smoe/train/optim.hpp"
#include "smoe/util/config_map.hpp"

namespace smoe::train {

using model::Model;

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  std::size_t accumulation = 1;  // micro-batches of one task per optimizer step
  double peak_lr = 2e-3;
  double floor_lr = 1e-5;
  std::size_t warmup_steps = 0;  // linear ramp to peak_lr before the cosine decay
  double grad_clip = 1.0;        // global L2 norm; 0 disables
  OptimizerConfig optimizer;
  Interleave interleave = Interleave::Strict;
  bool single_task = false;  // plain shuffled batches of whatever the dataset holds
  double nbwb_mix_fraction = 0.15;
  std::uint64_t seed = 1;

  void validate() const;
  // Reads `train.*` keys.
  static TrainConfig from_map(const ConfigMap& map) { return from_map(map, TrainConfig{}); }
  static TrainConfig from_map(const ConfigMap& map, const TrainConfig& base);
  std::string to_text() const;
};

// Learning rate for optimizer step `step` of `total`: warmup ramp, then cosine.
double scheduled_lr(const TrainConfig& config, std::size_t step);

// Mean cross-entropy of next-token prediction over the batch. The decoder
// sees target[0..n-2] and predicts target[1..n-1]; predictions of the
// language tag and BOS are excluded, as is padding.
num::Tensor batch_loss(Model& model, const Batch& batch, const model::ForwardContext& ctx);

struct StepOptions {
  double grad_clip = 0.0;
  Rng* dropout_rng = nullptr;  // dropout at the model's rate when set
  std::size_t step = 0;        // for diagnostics
};

// Forward, backward and one optimizer update over `micro_batches`, which must
// share a task; gradients are averaged. Throws NumericError (with lr, step and
// task) on a non-finite loss before touching any parameter.
double train_step(Model& model, std::span<const Batch> micro_batches, Optimizer& optimizer, double lr,
                  const StepOptions& options = {});
double train_step(Model& model, const Batch& batch, Optimizer& optimizer, double lr,
                  const StepOptions& options = {});

struct TrainResult {
  std::vector<double> losses;
  std::vector<Task> tasks;
};

// Runs config.steps optimizer steps over repeated epochs of the interleaved
// stream, writing one `step=<n> task=<A|S> lr=<f> loss=<f>` line per step.
TrainResult train(Model& model, const Dataset& data, const TrainConfig& config, std::ostream* log = nullptr);

struct TaskScores {
  std::size_t count = 0;
  double token_accuracy = 0.0;  // mean over utterances
  double wer = 0.0;             // corpus level: total edits / total reference tokens
  double bleu = 0.0;            // mean sentence BLEU, add-one smoothing
};

struct EvalReport {
  TaskScores asr;
  TaskScores st;
  double joint_accuracy() const { return 0.5 * (asr.token_accuracy + st.token_accuracy); }
};

// Greedy single-task decoding of every example.
EvalReport evaluate(Model& model, const Dataset& data, const seqio::Vocabulary& vocab);

}  // namespace smoe::train

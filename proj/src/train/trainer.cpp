#include "smoe/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <ostream>

#include <fmt/core.h>

#include "smoe/error.hpp"
#include "smoe/metrics/metrics.hpp"
#include "smoe/model/inference.hpp"
#include "smoe/numerics/ops.hpp"
#include "smoe/numerics/tape.hpp"

namespace smoe::train {

namespace {

constexpr seqio::TokenId kPad = seqio::id_of(seqio::GuidingToken::PAD);

char task_letter(Task t) { return t == Task::ASR ? 'A' : 'S'; }

std::vector<Batch> single_task_epoch(const Dataset& data, std::size_t batch_size, std::uint64_t seed,
                                     std::size_t index) {
  std::vector<const Example*> order;
  for (const auto& e : data) order.push_back(&e);
  auto rng = make_rng(seed, fmt::format("shuffle/{}", index));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const auto end = std::min(order.size(), i + batch_size);
    out.push_back(Batch::from_examples(std::span<const Example* const>(order.data() + i, end - i)));
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (steps == 0) throw ConfigError("train.steps must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (accumulation == 0) throw ConfigError("train.accumulation must be positive");
  if (peak_lr < floor_lr || floor_lr < 0.0) throw ConfigError("train: need 0 <= floor_lr <= peak_lr");
  if (warmup_steps >= steps) throw ConfigError("train.warmup_steps must be below train.steps");
  if (grad_clip < 0.0) throw ConfigError("train.grad_clip must be non-negative");
  if (nbwb_mix_fraction < 0.0 || nbwb_mix_fraction > 1.0) {
    throw ConfigError("train.nbwb_mix_fraction must be in [0, 1]");
  }
}

TrainConfig TrainConfig::from_map(const ConfigMap& m, const TrainConfig& base) {
  TrainConfig c = base;
  auto size = [&](const std::string& key, std::size_t fallback) {
    const auto v = m.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(fmt::format("key `{}` must be non-negative", key));
    return static_cast<std::size_t>(v);
  };
  c.steps = size("train.steps", c.steps);
  c.batch_size = size("train.batch_size", c.batch_size);
  c.accumulation = size("train.accumulation", c.accumulation);
  c.peak_lr = m.get_double("train.peak_lr", c.peak_lr);
  c.floor_lr = m.get_double("train.floor_lr", c.floor_lr);
  c.warmup_steps = size("train.warmup_steps", c.warmup_steps);
  c.grad_clip = m.get_double("train.grad_clip", c.grad_clip);
  c.optimizer.kind = m.get_string("train.optimizer", c.optimizer.kind);
  c.optimizer.momentum = m.get_double("train.momentum", c.optimizer.momentum);
  c.optimizer.beta1 = m.get_double("train.beta1", c.optimizer.beta1);
  c.optimizer.beta2 = m.get_double("train.beta2", c.optimizer.beta2);
  c.optimizer.eps = m.get_double("train.eps", c.optimizer.eps);
  c.interleave = parse_interleave(m.get_string("train.interleave", interleave_name(c.interleave)));
  c.single_task = m.get_bool("train.single_task", c.single_task);
  c.nbwb_mix_fraction = m.get_double("train.nbwb_mix_fraction", c.nbwb_mix_fraction);
  c.seed = static_cast<std::uint64_t>(m.get_int("train.seed", static_cast<std::int64_t>(c.seed)));
  c.validate();
  return c;
}

std::string TrainConfig::to_text() const {
  std::string out;
  auto line = [&](const char* k, const auto& v) { out += fmt::format("{} = {}\n", k, v); };
  line("train.steps", steps);
  line("train.batch_size", batch_size);
  line("train.accumulation", accumulation);
  line("train.peak_lr", fmt::format("{:.17g}", peak_lr));
  line("train.floor_lr", fmt::format("{:.17g}", floor_lr));
  line("train.warmup_steps", warmup_steps);
  line("train.grad_clip", fmt::format("{:.17g}", grad_clip));
  line("train.optimizer", optimizer.kind);
  line("train.momentum", fmt::format("{:.17g}", optimizer.momentum));
  line("train.beta1", fmt::format("{:.17g}", optimizer.beta1));
  line("train.beta2", fmt::format("{:.17g}", optimizer.beta2));
  line("train.eps", fmt::format("{:.17g}", optimizer.eps));
  line("train.interleave", interleave_name(interleave));
  line("train.single_task", single_task ? "true" : "false");
  line("train.nbwb_mix_fraction", fmt::format("{:.17g}", nbwb_mix_fraction));
  line("train.seed", seed);
  return out;
}

double scheduled_lr(const TrainConfig& c, std::size_t step) {
  if (step < c.warmup_steps) {
    return c.peak_lr * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
  }
  return cosine_lr(step - c.warmup_steps, c.steps - c.warmup_steps, c.peak_lr, c.floor_lr);
}

num::Tensor batch_loss(Model& model, const Batch& batch, const model::ForwardContext& ctx) {
  std::vector<num::Tensor> features;
  std::vector<std::vector<seqio::TokenId>> inputs;
  std::vector<seqio::TokenId> labels;
  std::vector<std::size_t> memory_of_row;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    features.push_back(batch.features(i));
    const auto ids = batch.target(i);
    inputs.emplace_back(ids.begin(), ids.end() - 1);
    for (std::size_t p = 1; p < ids.size(); ++p) {
      labels.push_back(p < seqio::kGuidePrefixLength ? kPad : ids[p]);
    }
    memory_of_row.push_back(i);
  }
  const auto memory = model.encode(features, batch.bandwidths(), ctx);
  const std::vector<Task> tasks(batch.size(), batch.task());
  const auto logits = model.decode(memory, memory_of_row, inputs, tasks, ctx);
  return num::softmax_cross_entropy(logits, labels, kPad);
}

double train_step(Model& model, std::span<const Batch> micro_batches, Optimizer& optimizer, double lr,
                  const StepOptions& options) {
  if (micro_batches.empty()) throw ContractError("train_step: no batches");
  const auto task = micro_batches.front().task();
  for (const auto& b : micro_batches) {
    if (b.task() != task) throw ContractError("train_step: micro-batches of one step must share a task");
  }
  model::ForwardContext ctx;
  ctx.training = true;
  ctx.dropout = options.dropout_rng ? model.config().dropout : 0.0;
  ctx.rng = options.dropout_rng;

  optimizer.zero_grad();
  double total = 0.0;
  const double weight = 1.0 / static_cast<double>(micro_batches.size());
  for (const auto& b : micro_batches) {
    num::Tape tape;
    const auto loss = num::scale(batch_loss(model, b, ctx), weight);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      optimizer.zero_grad();
      throw NumericError(fmt::format("non-finite loss {} at step {} (lr {}, task {})", value, options.step, lr,
                                     moe::to_string(task)));
    }
    tape.backward(loss);
    total += value;
  }
  if (options.grad_clip > 0.0) {
    const double norm = optimizer.clip_grad_norm(options.grad_clip);
    if (!std::isfinite(norm)) {
      optimizer.zero_grad();
      throw NumericError(fmt::format("non-finite gradient norm at step {} (lr {}, task {})", options.step, lr,
                                     moe::to_string(task)));
    }
  }
  optimizer.step(lr);
  optimizer.zero_grad();
  return total;
}

double train_step(Model& model, const Batch& batch, Optimizer& optimizer, double lr, const StepOptions& options) {
  return train_step(model, std::span<const Batch>(&batch, 1), optimizer, lr, options);
}

TrainResult train(Model& model, const Dataset& data, const TrainConfig& config, std::ostream* log) {
  config.validate();
  auto optimizer = make_optimizer(config.optimizer, model.named_params());
  auto dropout_rng = make_rng(config.seed, "dropout");
  const auto shuffle_seed = derive_seed(config.seed, "shuffle");
  std::optional<InterleavedStream> stream;
  if (!config.single_task) stream.emplace(data, config.batch_size, shuffle_seed, config.interleave);
  if (data.empty()) throw ConfigError("train: empty dataset");

  TrainResult result;
  std::size_t epoch = 0;
  std::deque<Batch> queues[2];
  std::vector<Batch> pending;
  while (result.losses.size() < config.steps) {
    // Next group of `accumulation` same-task batches.
    std::vector<Batch> group;
    if (config.single_task) {
      while (pending.size() < config.accumulation) {
        auto more = single_task_epoch(data, config.batch_size, shuffle_seed, epoch++);
        pending.insert(pending.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
      }
      group.assign(std::make_move_iterator(pending.begin()),
                   std::make_move_iterator(pending.begin() + static_cast<std::ptrdiff_t>(config.accumulation)));
      pending.erase(pending.begin(), pending.begin() + static_cast<std::ptrdiff_t>(config.accumulation));
    } else {
      const int due = result.tasks.empty() || result.tasks.back() == Task::ST ? 0 : 1;
      if (queues[due].size() < config.accumulation) {
        queues[0].clear();
        queues[1].clear();
        for (auto& b : stream->epoch(epoch++)) queues[b.task() == Task::ASR ? 0 : 1].push_back(std::move(b));
        if (queues[due].size() < config.accumulation) {
          throw ConfigError("train: an epoch holds fewer batches than train.accumulation");
        }
      }
      for (std::size_t k = 0; k < config.accumulation; ++k) {
        group.push_back(std::move(queues[due].front()));
        queues[due].pop_front();
      }
    }
    const auto step = result.losses.size();
    const double lr = scheduled_lr(config, step);
    const auto task = group.front().task();
    StepOptions opts;
    opts.grad_clip = config.grad_clip;
    opts.dropout_rng = model.config().dropout > 0.0 ? &dropout_rng : nullptr;
    opts.step = step;
    const double loss = train_step(model, group, *optimizer, lr, opts);
    result.losses.push_back(loss);
    result.tasks.push_back(task);
    if (log) *log << fmt::format("step={} task={} lr={:.6e} loss={:.8f}\n", step, task_letter(task), lr, loss);
  }
  return result;
}

EvalReport evaluate(Model& model, const Dataset& data, const seqio::Vocabulary& vocab) {
  EvalReport report;
  std::size_t edits[2] = {0, 0}, ref_tokens[2] = {0, 0};
  const auto limit = model.config().max_tgt_tokens - seqio::kGuidePrefixLength + 1;
  metrics::BleuOptions bleu_opts;
  bleu_opts.smooth_k = 1.0;
  for (const auto& e : data) {
    const auto task = e.target.task;
    const auto max_len = std::min(limit, e.target.ids.size() + 4);
    signal::FbankFeatures f{e.features, e.bandwidth};
    const auto hyp = model::infer_single(model, f, e.bandwidth, task, e.target.language, max_len);
    const auto ref = metrics::split_whitespace(e.text);
    const auto out = metrics::split_whitespace(vocab.decode(hyp.ids));
    auto& s = task == Task::ASR ? report.asr : report.st;
    const int t = task == Task::ASR ? 0 : 1;
    s.count += 1;
    s.token_accuracy += metrics::token_accuracy(ref, out);
    s.bleu += metrics::bleu({ref}, out, bleu_opts).score;
    edits[t] += metrics::wer(ref, out).alignment.errors();
    ref_tokens[t] += ref.size();
  }
  for (int t = 0; t < 2; ++t) {
    auto& s = t == 0 ? report.asr : report.st;
    if (s.count == 0) continue;
    s.token_accuracy /= static_cast<double>(s.count);
    s.bleu /= static_cast<double>(s.count);
    s.wer = static_cast<double>(edits[t]) / static_cast<double>(ref_tokens[t]);
  }
  return report;
}

}  // namespace smoe::train

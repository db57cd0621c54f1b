#include "smoe/train/batch.hpp"

#include <algorithm>

#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe::train {

Batch Batch::from_examples(std::span<const Example* const> examples) {
  if (examples.empty()) throw ContractError("batch: no examples");
  Batch b;
  b.task_ = seqio::task_of(examples.front()->target);
  const auto n_mels = examples.front()->features.cols();
  std::size_t max_frames = 0, max_tokens = 0;
  for (const auto* e : examples) {
    if (seqio::task_of(e->target) != b.task_) {
      throw ContractError(fmt::format("batch: example `{}` is {} in a {} batch", e->id,
                                      moe::to_string(seqio::task_of(e->target)), moe::to_string(b.task_)));
    }
    if (e->features.cols() != n_mels) throw ShapeError("batch: feature widths differ");
    seqio::validate(e->target);
    max_frames = std::max(max_frames, e->features.rows());
    max_tokens = std::max(max_tokens, e->target.ids.size());
  }
  std::vector<double> feats(examples.size() * max_frames * n_mels, 0.0);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto* e = examples[i];
    const auto src = e->features.data();
    std::copy(src.begin(), src.end(), feats.begin() + static_cast<std::ptrdiff_t>(i * max_frames * n_mels));
    b.feature_lengths_.push_back(e->features.rows());
    b.bandwidths_.push_back(e->bandwidth);
    auto ids = e->target.ids;
    b.target_lengths_.push_back(ids.size());
    ids.resize(max_tokens, seqio::id_of(seqio::GuidingToken::PAD));
    b.targets_.push_back(std::move(ids));
  }
  b.features_ = num::Tensor({examples.size(), max_frames, n_mels}, std::move(feats));
  return b;
}

Batch Batch::from_examples(const std::vector<Example>& examples) {
  std::vector<const Example*> ptrs;
  for (const auto& e : examples) ptrs.push_back(&e);
  return from_examples(std::span<const Example* const>(ptrs));
}

num::Tensor Batch::features(std::size_t i) const {
  const auto max_frames = features_.shape()[1], n_mels = features_.shape()[2];
  const auto len = feature_lengths_.at(i);
  const auto src = features_.data().subspan(i * max_frames * n_mels, len * n_mels);
  return num::Tensor({len, n_mels}, std::vector<double>(src.begin(), src.end()));
}

std::vector<seqio::TokenId> Batch::target(std::size_t i) const {
  const auto& row = targets_.at(i);
  return {row.begin(), row.begin() + static_cast<std::ptrdiff_t>(target_lengths_[i])};
}

Interleave parse_interleave(const std::string& s) {
  if (s == "strict") return Interleave::Strict;
  if (s == "proportional") return Interleave::Proportional;
  throw ConfigError("unknown interleave mode `" + s + "` (expected strict or proportional)");
}

std::string interleave_name(Interleave mode) {
  return mode == Interleave::Strict ? "strict" : "proportional";
}

InterleavedStream::InterleavedStream(const Dataset& data, std::size_t batch_size, std::uint64_t seed,
                                     Interleave mode)
    : data_(&data), batch_size_(batch_size), seed_(seed), mode_(mode) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_task_[data[i].target.task == Task::ASR ? 0 : 1].push_back(i);
  }
  if (by_task_[0].empty() || by_task_[1].empty()) {
    throw ConfigError(fmt::format("interleaved stream needs both tasks (ASR {}, ST {})", by_task_[0].size(),
                                  by_task_[1].size()));
  }
}

std::vector<Batch> InterleavedStream::epoch(std::size_t index) const {
  auto rng = make_rng(seed_, fmt::format("shuffle/{}", index));
  std::vector<std::vector<std::vector<const Example*>>> chunks(2);
  for (int t = 0; t < 2; ++t) {
    auto order = by_task_[t];
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); i += batch_size_) {
      std::vector<const Example*> chunk;
      for (std::size_t j = i; j < std::min(order.size(), i + batch_size_); ++j) chunk.push_back(&(*data_)[order[j]]);
      chunks[t].push_back(std::move(chunk));
    }
  }
  std::vector<Batch> out;
  std::size_t next[2] = {0, 0};
  if (mode_ == Interleave::Strict) {
    for (int t = 0;; t = 1 - t) {
      if (next[t] == chunks[t].size()) break;
      out.push_back(Batch::from_examples(std::span<const Example* const>(chunks[t][next[t]++])));
    }
  } else {
    const double total[2] = {static_cast<double>(chunks[0].size()), static_cast<double>(chunks[1].size())};
    while (next[0] < chunks[0].size() || next[1] < chunks[1].size()) {
      const double share0 = static_cast<double>(next[0]) / total[0];
      const double share1 = static_cast<double>(next[1]) / total[1];
      const int t = next[1] == chunks[1].size() || (next[0] < chunks[0].size() && share0 <= share1) ? 0 : 1;
      out.push_back(Batch::from_examples(std::span<const Example* const>(chunks[t][next[t]++])));
    }
  }
  return out;
}

}  // namespace smoe::train

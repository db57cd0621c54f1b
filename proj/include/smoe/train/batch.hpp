#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "smoe/train/dataset.hpp"

namespace smoe::train {

// Task-homogeneous training unit. Features are zero-padded to
// [batch x max_frames x n_mels] and targets PAD-padded, with explicit lengths.
// Construction rejects mixed-task input, so a mixed batch cannot exist.
class Batch {
 public:
  static Batch from_examples(std::span<const Example* const> examples);
  static Batch from_examples(const std::vector<Example>& examples);

  Task task() const { return task_; }
  std::size_t size() const { return bandwidths_.size(); }
  const num::Tensor& padded_features() const { return features_; }
  const std::vector<std::size_t>& feature_lengths() const { return feature_lengths_; }
  const std::vector<Bandwidth>& bandwidths() const { return bandwidths_; }
  const std::vector<std::vector<seqio::TokenId>>& padded_targets() const { return targets_; }
  const std::vector<std::size_t>& target_lengths() const { return target_lengths_; }

  // Unpadded views.
  num::Tensor features(std::size_t i) const;
  std::vector<seqio::TokenId> target(std::size_t i) const;

 private:
  Task task_ = Task::ASR;
  num::Tensor features_;
  std::vector<std::size_t> feature_lengths_;
  std::vector<Bandwidth> bandwidths_;
  std::vector<std::vector<seqio::TokenId>> targets_;
  std::vector<std::size_t> target_lengths_;
};

enum class Interleave { Strict, Proportional };

Interleave parse_interleave(const std::string& s);
std::string interleave_name(Interleave mode);

// Batches of one epoch. Each task's examples are shuffled (seeded by epoch)
// and chunked; Strict emits ASR, ST, ASR, ... and ends the epoch as soon as
// the task due next has no batch left. Proportional emits every batch, always
// picking the task that is furthest behind its share.
class InterleavedStream {
 public:
  InterleavedStream(const Dataset& data, std::size_t batch_size, std::uint64_t seed,
                    Interleave mode = Interleave::Strict);

  std::vector<Batch> epoch(std::size_t index) const;

 private:
  const Dataset* data_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  Interleave mode_;
  std::vector<std::size_t> by_task_[2];
};

}  // namespace smoe::train

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "smoe/model/config.hpp"
#include "smoe/train/trainer.hpp"

namespace smoe::train {

struct ExperimentConfig {
  SyntheticTaskSpec spec;
  model::ModelConfig model;  // dims shared by every variant
  TrainConfig train;
  std::size_t n_train_items = 800;
  std::size_t n_test_items = 100;
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  // Benchmark only: single-task control runs on the same step budget.
  bool run_controls = true;
  // NB/WB fine-tuning only.
  std::size_t finetune_steps = 300;
  double finetune_peak_lr = 1e-3;

  // Model keys, train.*, synth.* and exp.* keys layered over `base`.
  static ExperimentConfig from_map(const ConfigMap& map, const ExperimentConfig& base);
  // Model, train, synth and exp keys; from_map(parse(to_text()), x) reproduces this.
  std::string to_text() const;
  // Desk-scale defaults: small decoder FFN so the shared baseline saturates.
  static ExperimentConfig interference_defaults();
  static ExperimentConfig nbwb_defaults();
};

struct SyntheticSplit {
  std::vector<SyntheticItem> train, test;
};

// First n_train_items of one generate_items draw for training, the rest held out.
SyntheticSplit synthetic_split(const ExperimentConfig& config, double nbwb_mix, std::uint64_t seed);

struct VariantResult {
  std::string name;
  std::uint64_t trainable = 0;
  std::uint64_t active = 0;
  std::vector<EvalReport> per_seed;

  double mean_asr() const;
  double mean_st() const;
  double mean_joint() const;
};

struct BenchmarkReport {
  std::vector<VariantResult> variants;  // Base, DecFFNx2, DecS-MoE
  std::vector<double> control_asr;      // per seed, ASR-only baseline
  std::vector<double> control_st;       // per seed, ST-only baseline
  bool spec_too_hard = false;           // some control stayed below 99 %

  const VariantResult& variant(const std::string& name) const;
  // Tab-separated, one row per model: model, trainable, active, per-task metrics.
  std::string to_tsv() const;
};

// Base, DecFFNx2 (decoder FFN width doubled) and DecS-MoE trained on the same
// interleaved stream for every seed, then greedily decoded on held-out items.
// Training logs of every run go to `log`, each preceded by a `# run=` line.
BenchmarkReport run_interference_benchmark(const ExperimentConfig& config, std::ostream* log = nullptr);

// Builds the EncDec S-MoE model from `donor` (encoder FFNs cloned into a
// bandwidth-routed bank) and trains it on `mixed`.
Model finetune_nbwb(const Model& donor, const Dataset& mixed, const model::ModelConfig& target,
                    const TrainConfig& train_config, std::ostream* log = nullptr);

struct NbwbSeedResult {
  std::uint64_t seed = 0;
  EvalReport donor_wb, donor_nb;
  EvalReport expanded_wb;  // right after expansion, before any update
  EvalReport tuned_wb, tuned_nb;
  std::uint64_t encoder_calls_wb = 0;  // expert 0 invocations during fine-tuning
  std::uint64_t encoder_calls_nb = 0;  // expert 1 invocations during fine-tuning
  std::uint64_t encoder_rows_wb = 0;   // frames routed to expert 0 during fine-tuning
  std::uint64_t encoder_rows_nb = 0;
  double mixed_nb_frame_fraction = 0.0;  // NB share of frames in the fine-tuning set
};

struct NbwbReport {
  std::vector<NbwbSeedResult> seeds;

  // Mean joint token accuracy of one evaluation across seeds.
  double mean(EvalReport NbwbSeedResult::*field) const;
  std::string to_tsv() const;
};

// Per seed: a DecS-MoE donor trained on WB data only, evaluated on WB and NB
// test sets, then fine-tuned on the NB/WB subset (nbwb_mix_fraction of the
// items, both conditions) and evaluated again.
NbwbReport run_nbwb_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

}  // namespace smoe::train

#include "smoe/train/experiments.hpp"

#include <ostream>
#include <sstream>

#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe::train {

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("exp.seeds: `{}` is not a seed", item));
    }
  }
  if (out.empty()) throw ConfigError("exp.seeds must list at least one seed");
  return out;
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (auto s : seeds) out += (out.empty() ? "" : ",") + std::to_string(s);
  return out;
}

Dataset only_task(const Dataset& data, Task task) {
  Dataset out;
  for (const auto& e : data) {
    if (e.target.task == task) out.push_back(e);
  }
  return out;
}

void log_run(std::ostream* log, const std::string& name, std::uint64_t seed) {
  if (log) *log << fmt::format("# run={} seed={}\n", name, seed);
}

}  // namespace

SyntheticSplit synthetic_split(const ExperimentConfig& c, double mix, std::uint64_t seed) {
  auto items = generate_items(c.spec, c.n_train_items + c.n_test_items, mix, seed);
  SyntheticSplit s;
  const auto cut = items.begin() + static_cast<std::ptrdiff_t>(c.n_train_items);
  s.train.assign(std::make_move_iterator(items.begin()), std::make_move_iterator(cut));
  s.test.assign(std::make_move_iterator(cut), std::make_move_iterator(items.end()));
  return s;
}

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& m, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  c.model = model::ModelConfig::from_map(m, base.model);
  c.train = TrainConfig::from_map(m, base.train);
  c.spec = SyntheticTaskSpec::from_map(m, base.spec);
  auto size = [&](const std::string& key, std::size_t fallback) {
    const auto v = m.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(fmt::format("key `{}` must be non-negative", key));
    return static_cast<std::size_t>(v);
  };
  c.n_train_items = size("exp.n_train_items", c.n_train_items);
  c.n_test_items = size("exp.n_test_items", c.n_test_items);
  c.seeds = parse_seeds(m.get_string("exp.seeds", join_seeds(c.seeds)));
  c.run_controls = m.get_bool("exp.run_controls", c.run_controls);
  c.finetune_steps = size("exp.finetune_steps", c.finetune_steps);
  c.finetune_peak_lr = m.get_double("exp.finetune_peak_lr", c.finetune_peak_lr);
  if (c.n_train_items == 0 || c.n_test_items == 0) throw ConfigError("exp: item counts must be positive");
  return c;
}

std::string ExperimentConfig::to_text() const {
  std::string out = model.to_text() + train.to_text() + spec.to_text();
  out += fmt::format("exp.n_train_items = {}\n", n_train_items);
  out += fmt::format("exp.n_test_items = {}\n", n_test_items);
  out += fmt::format("exp.seeds = {}\n", join_seeds(seeds));
  out += fmt::format("exp.run_controls = {}\n", run_controls ? "true" : "false");
  out += fmt::format("exp.finetune_steps = {}\n", finetune_steps);
  out += fmt::format("exp.finetune_peak_lr = {:.17g}\n", finetune_peak_lr);
  return out;
}

ExperimentConfig ExperimentConfig::interference_defaults() {
  ExperimentConfig c;
  c.model.n_enc_layers = 1;
  c.model.n_dec_layers = 1;
  c.model.d_model = 16;
  c.model.d_ff = 1;
  c.model.n_heads = 2;
  c.model.dropout = 0.0;
  c.model.max_src_frames = 64;
  c.model.max_tgt_tokens = 24;
  c.train.steps = 2000;
  c.train.batch_size = 8;
  c.train.peak_lr = 3e-3;
  c.train.warmup_steps = 50;
  c.n_train_items = 600;
  c.n_test_items = 100;
  return c;
}

ExperimentConfig ExperimentConfig::nbwb_defaults() {
  auto c = interference_defaults();
  c.model.d_ff = 32;
  c.run_controls = false;
  c.n_train_items = 1600;
  c.finetune_steps = 600;
  return c;
}

double VariantResult::mean_asr() const {
  double s = 0.0;
  for (const auto& r : per_seed) s += r.asr.token_accuracy;
  return per_seed.empty() ? 0.0 : s / static_cast<double>(per_seed.size());
}

double VariantResult::mean_st() const {
  double s = 0.0;
  for (const auto& r : per_seed) s += r.st.token_accuracy;
  return per_seed.empty() ? 0.0 : s / static_cast<double>(per_seed.size());
}

double VariantResult::mean_joint() const { return 0.5 * (mean_asr() + mean_st()); }

const VariantResult& BenchmarkReport::variant(const std::string& name) const {
  for (const auto& v : variants) {
    if (v.name == name) return v;
  }
  throw ContractError("benchmark report has no variant `" + name + "`");
}

std::string BenchmarkReport::to_tsv() const {
  std::string out = "model\ttrainable\tactive\tasr_token_acc\tst_token_acc\tjoint_token_acc\tasr_wer\tst_bleu\n";
  for (const auto& v : variants) {
    double wer = 0.0, bleu = 0.0;
    for (const auto& r : v.per_seed) {
      wer += r.asr.wer;
      bleu += r.st.bleu;
    }
    const auto n = static_cast<double>(std::max<std::size_t>(1, v.per_seed.size()));
    out += fmt::format("{}\t{}\t{}\t{:.4f}\t{:.4f}\t{:.4f}\t{:.4f}\t{:.2f}\n", v.name, v.trainable, v.active,
                       v.mean_asr(), v.mean_st(), v.mean_joint(), wer / n, bleu / n);
  }
  return out;
}

BenchmarkReport run_interference_benchmark(const ExperimentConfig& config, std::ostream* log) {
  config.model.validate();
  config.train.validate();
  auto base = config.model;
  base.enc_smoe = false;
  base.dec_smoe = false;
  base.dec_d_ff = 0;
  auto wide = base;
  wide.dec_d_ff = 2 * base.d_ff;
  auto smoe = base;
  smoe.dec_smoe = true;
  const std::vector<std::pair<std::string, model::ModelConfig>> variants = {
      {"Base", base}, {"DecFFNx2", wide}, {"DecS-MoE", smoe}};

  BenchmarkReport report;
  for (const auto& [name, cfg] : variants) {
    const auto counts = model::count_params(cfg);
    report.variants.push_back({name, counts.trainable, counts.active, {}});
  }
  const seqio::Vocabulary vocab;
  for (auto seed : config.seeds) {
    const auto split = synthetic_split(config, 0.0, seed);
    const auto train_data = build_dataset(config.spec, split.train, {}, vocab);
    const auto test_data = build_dataset(config.spec, split.test, {}, vocab);
    auto train_cfg = config.train;
    train_cfg.seed = seed;

    if (config.run_controls) {
      auto control_cfg = train_cfg;
      control_cfg.single_task = true;
      for (auto task : {Task::ASR, Task::ST}) {
        Model m(base, seed);
        log_run(log, fmt::format("control-{}", moe::to_string(task)), seed);
        train(m, only_task(train_data, task), control_cfg, log);
        const auto eval = evaluate(m, only_task(test_data, task), vocab);
        const double acc = task == Task::ASR ? eval.asr.token_accuracy : eval.st.token_accuracy;
        (task == Task::ASR ? report.control_asr : report.control_st).push_back(acc);
        if (acc < 0.99) report.spec_too_hard = true;
        if (log) *log << fmt::format("# control task={} token_acc={:.4f}\n", moe::to_string(task), acc);
      }
    }
    for (std::size_t v = 0; v < variants.size(); ++v) {
      Model m(variants[v].second, seed);
      log_run(log, variants[v].first, seed);
      train(m, train_data, train_cfg, log);
      const auto eval = evaluate(m, test_data, vocab);
      report.variants[v].per_seed.push_back(eval);
      if (log) {
        *log << fmt::format("# eval model={} asr_acc={:.4f} st_acc={:.4f} joint={:.4f}\n", variants[v].first,
                            eval.asr.token_accuracy, eval.st.token_accuracy, eval.joint_accuracy());
      }
    }
  }
  return report;
}

Model finetune_nbwb(const Model& donor, const Dataset& mixed, const model::ModelConfig& target,
                    const TrainConfig& train_config, std::ostream* log) {
  if (!target.enc_smoe) throw ConfigError("finetune_nbwb: target config must enable the encoder expert bank");
  auto model = model::expand_from_donor(donor, target);
  train(model, mixed, train_config, log);
  return model;
}

double NbwbReport::mean(EvalReport NbwbSeedResult::*field) const {
  double s = 0.0;
  for (const auto& r : seeds) s += (r.*field).joint_accuracy();
  return seeds.empty() ? 0.0 : s / static_cast<double>(seeds.size());
}

std::string NbwbReport::to_tsv() const {
  std::string out =
      "seed\tdonor_wb_acc\tdonor_nb_acc\texpanded_wb_acc\ttuned_wb_acc\ttuned_nb_acc\tenc_calls_wb\tenc_calls_nb\tenc_rows_wb\tenc_rows_nb\tmixed_nb_frames\n";
  for (const auto& s : seeds) {
    out += fmt::format("{}\t{:.4f}\t{:.4f}\t{:.4f}\t{:.4f}\t{:.4f}\t{}\t{}\t{}\t{}\t{:.4f}\n", s.seed,
                       s.donor_wb.joint_accuracy(), s.donor_nb.joint_accuracy(), s.expanded_wb.joint_accuracy(),
                       s.tuned_wb.joint_accuracy(), s.tuned_nb.joint_accuracy(), s.encoder_calls_wb,
                       s.encoder_calls_nb, s.encoder_rows_wb, s.encoder_rows_nb, s.mixed_nb_frame_fraction);
  }
  return out;
}

NbwbReport run_nbwb_experiment(const ExperimentConfig& config, std::ostream* log) {
  auto donor_cfg = config.model;
  donor_cfg.enc_smoe = false;
  donor_cfg.dec_smoe = true;
  auto target_cfg = donor_cfg;
  target_cfg.enc_smoe = true;
  const seqio::Vocabulary vocab;

  NbwbReport report;
  for (auto seed : config.seeds) {
    NbwbSeedResult r;
    r.seed = seed;
    const auto split = synthetic_split(config, config.train.nbwb_mix_fraction, seed);
    const auto donor_data = build_dataset(config.spec, split.train, {}, vocab);
    const auto test_wb = build_dataset(config.spec, split.test, {}, vocab);
    ExampleOptions nb_only;
    nb_only.narrowband_only = true;
    const auto test_nb = build_dataset(config.spec, split.test, nb_only, vocab);
    std::vector<SyntheticItem> subset;
    for (const auto& item : split.train) {
      if (item.has_narrowband_twin) subset.push_back(item);
    }
    ExampleOptions both;
    both.narrowband_twins = true;
    const auto mixed = build_dataset(config.spec, subset, both, vocab);

    auto train_cfg = config.train;
    train_cfg.seed = seed;
    Model donor(donor_cfg, seed);
    log_run(log, "donor", seed);
    train(donor, donor_data, train_cfg, log);
    r.donor_wb = evaluate(donor, test_wb, vocab);
    r.donor_nb = evaluate(donor, test_nb, vocab);

    auto expanded = model::expand_from_donor(donor, target_cfg);
    r.expanded_wb = evaluate(expanded, test_wb, vocab);

    auto tune_cfg = train_cfg;
    tune_cfg.steps = config.finetune_steps;
    tune_cfg.peak_lr = config.finetune_peak_lr;
    tune_cfg.warmup_steps = std::min(tune_cfg.warmup_steps, tune_cfg.steps - 1);
    tune_cfg.seed = derive_seed(seed, "finetune");
    log_run(log, "finetune", seed);
    auto tuned = finetune_nbwb(donor, mixed, target_cfg, tune_cfg, log);
    const auto layers = tuned.encoder_smoe_layers();
    r.encoder_calls_wb = layers.front()->call_counts()[0];
    r.encoder_calls_nb = layers.front()->call_counts()[1];
    r.encoder_rows_wb = layers.front()->row_counts()[0];
    r.encoder_rows_nb = layers.front()->row_counts()[1];
    std::size_t nb_frames = 0, all_frames = 0;
    for (const auto& e : mixed) {
      all_frames += e.features.rows();
      if (e.bandwidth == Bandwidth::NB) nb_frames += e.features.rows();
    }
    r.mixed_nb_frame_fraction = static_cast<double>(nb_frames) / static_cast<double>(all_frames);
    r.tuned_wb = evaluate(tuned, test_wb, vocab);
    r.tuned_nb = evaluate(tuned, test_nb, vocab);
    if (log) {
      *log << fmt::format("# nbwb seed={} donor_wb={:.4f} donor_nb={:.4f} tuned_wb={:.4f} tuned_nb={:.4f}\n", seed,
                          r.donor_wb.joint_accuracy(), r.donor_nb.joint_accuracy(), r.tuned_wb.joint_accuracy(),
                          r.tuned_nb.joint_accuracy());
    }
    report.seeds.push_back(r);
  }
  return report;
}

}  // namespace smoe::train

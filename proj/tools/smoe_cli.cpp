// Command-line front end: data generation, training, NB/WB fine-tuning,
// evaluation, dual-task inference, parameter inspection, gradient checking
// and the benchmark experiments.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <fmt/core.h>

#include "smoe/error.hpp"
#include "smoe/model/checkpoint.hpp"
#include "smoe/model/inference.hpp"
#include "smoe/numerics/grad_check.hpp"
#include "smoe/signal/wav_io.hpp"
#include "smoe/train/batch.hpp"
#include "smoe/train/experiments.hpp"
#include "smoe/util/config_map.hpp"

namespace fs = std::filesystem;
using namespace smoe;
using moe::Bandwidth;
using moe::Task;

namespace {

enum Exit : int { kOk = 0, kConfig = 1, kCheckpoint = 2, kInput = 3, kNumeric = 4 };

class CheckpointFailure : public Error {
  using Error::Error;
};

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config_path, "Config file of `key = value` lines");
  cmd->add_option("--set", c.overrides, "Override one key (key=value); repeatable")->take_all();
  cmd->add_option("--seed", c.seed, "Root seed (sets train.seed and exp.seeds)");
  auto* out = cmd->add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
}

train::ExperimentConfig resolve(const Common& c, const train::ExperimentConfig& base) {
  ConfigMap map;
  if (!c.config_path.empty()) {
    try {
      map = ConfigMap::load(c.config_path);
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
  }
  for (const auto& o : c.overrides) map.apply_override(o);
  auto config = train::ExperimentConfig::from_map(map, base);
  map.reject_unknown();
  if (c.seed) {
    config.train.seed = *c.seed;
    config.seeds = {*c.seed};
  }
  return config;
}

fs::path prepare_out(const std::string& dir) {
  const fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError(fmt::format("cannot create output directory {}: {}", dir, ec.message()));
  return p;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

void write_snapshot(const fs::path& dir, const std::string& command, const train::ExperimentConfig& c,
                    const std::string& extra = "") {
  write_file(dir / "resolved_config.txt", "# smoe " + command + "\n" + c.to_text() + extra);
}

model::LoadedCheckpoint open_checkpoint(const std::string& path) {
  try {
    return model::load_checkpoint(path);
  } catch (const IoError& e) {
    throw CheckpointFailure(e.what());
  } catch (const FormatError& e) {
    throw CheckpointFailure(e.what());
  } catch (const ConfigError& e) {
    throw CheckpointFailure(e.what());
  }
}

train::Dataset load_data(const std::string& dir, const seqio::Vocabulary& vocab) {
  return train::load_manifest_dataset(fs::path(dir) / "manifest.tsv", vocab);
}

Task parse_task_flag(const std::string& s) {
  if (s == "asr") return Task::ASR;
  if (s == "st") return Task::ST;
  throw ConfigError(fmt::format("unknown task `{}` (asr | st)", s));
}

std::string eval_tsv(const train::EvalReport& r) {
  std::string out = "task\tcount\ttoken_acc\twer\tbleu\n";
  out += fmt::format("ASR\t{}\t{:.4f}\t{:.4f}\t{:.2f}\n", r.asr.count, r.asr.token_accuracy, r.asr.wer, r.asr.bleu);
  out += fmt::format("ST\t{}\t{:.4f}\t{:.4f}\t{:.2f}\n", r.st.count, r.st.token_accuracy, r.st.wer, r.st.bleu);
  return out;
}

// --- subcommands ----------------------------------------------------------

int cmd_datagen(const Common& common, std::optional<std::size_t> n_items) {
  const auto c = resolve(common, {});
  const auto dir = prepare_out(common.out);
  const auto n = n_items.value_or(c.n_train_items);
  const auto items = train::generate_items(c.spec, n, c.train.nbwb_mix_fraction, c.train.seed);
  const auto records = train::write_synthetic_corpus(c.spec, items, dir);
  write_snapshot(dir, "datagen", c, fmt::format("# items = {}\n", n));
  std::size_t nb = 0;
  for (const auto& r : records) nb += r.bandwidth == Bandwidth::NB;
  std::cout << fmt::format("wrote {} records ({} WB items, {} NB twins) to {}\n", records.size(), n, nb / 2,
                           (dir / "manifest.tsv").string());
  return kOk;
}

int cmd_train(const Common& common, const std::string& data_dir) {
  const auto c = resolve(common, {});
  const seqio::Vocabulary vocab;
  const auto data = data_dir.empty()
                        ? train::build_dataset(c.spec, train::synthetic_split(c, 0.0, c.train.seed).train, {}, vocab)
                        : load_data(data_dir, vocab);
  const auto dir = prepare_out(common.out);
  write_snapshot(dir, "train", c);
  model::Model m(c.model, c.train.seed);
  std::ofstream log(dir / "train.log");
  const auto result = train::train(m, data, c.train, &log);
  model::save_checkpoint(m, result.losses.size(), dir / "model.ckpt");
  std::cout << fmt::format("trained {} steps on {} examples, final loss {:.6f}; checkpoint {}\n",
                           result.losses.size(), data.size(), result.losses.back(),
                           (dir / "model.ckpt").string());
  return kOk;
}

int cmd_finetune(const Common& common, const std::string& donor_path, const std::string& data_dir) {
  const auto c = resolve(common, train::ExperimentConfig::nbwb_defaults());
  auto donor = open_checkpoint(donor_path);
  const seqio::Vocabulary vocab;
  train::Dataset mixed;
  if (data_dir.empty()) {
    std::vector<train::SyntheticItem> twins;
    for (auto& item : train::synthetic_split(c, c.train.nbwb_mix_fraction, c.train.seed).train) {
      if (item.has_narrowband_twin) twins.push_back(std::move(item));
    }
    train::ExampleOptions both;
    both.narrowband_twins = true;
    mixed = train::build_dataset(c.spec, twins, both, vocab);
  } else {
    mixed = load_data(data_dir, vocab);
  }
  auto target = donor.model.config();
  target.enc_smoe = true;
  auto tune = c.train;
  tune.steps = c.finetune_steps;
  tune.peak_lr = c.finetune_peak_lr;
  tune.warmup_steps = std::min(tune.warmup_steps, tune.steps - 1);
  tune.seed = derive_seed(c.train.seed, "finetune");

  const auto dir = prepare_out(common.out);
  write_snapshot(dir, "finetune-nbwb", c, "# donor = " + donor_path + "\n");
  std::ofstream log(dir / "train.log");
  auto tuned = train::finetune_nbwb(donor.model, mixed, target, tune, &log);
  model::save_checkpoint(tuned, donor.step + tune.steps, dir / "model.ckpt");
  const auto* layer = tuned.encoder_smoe_layers().front();
  std::cout << fmt::format("fine-tuned {} steps on {} examples; encoder rows WB/NB = {}/{}; checkpoint {}\n",
                           tune.steps, mixed.size(), layer->row_counts()[0], layer->row_counts()[1],
                           (dir / "model.ckpt").string());
  return kOk;
}

int cmd_eval(const Common& common, const std::string& ckpt, const std::string& data_dir,
             const std::string& condition) {
  const auto c = resolve(common, {});
  auto loaded = open_checkpoint(ckpt);
  const seqio::Vocabulary vocab;
  train::Dataset data;
  if (data_dir.empty()) {
    train::ExampleOptions opts;
    if (condition == "nb") opts.narrowband_only = true;
    else if (condition != "wb") throw ConfigError(fmt::format("unknown condition `{}` (wb | nb)", condition));
    data = train::build_dataset(c.spec, train::synthetic_split(c, 0.0, c.train.seed).test, opts, vocab);
  } else {
    data = load_data(data_dir, vocab);
  }
  const auto report = train::evaluate(loaded.model, data, vocab);
  const auto text = eval_tsv(report);
  if (!common.out.empty()) {
    const auto dir = prepare_out(common.out);
    write_snapshot(dir, "eval", c, "# checkpoint = " + ckpt + "\n");
    write_file(dir / "eval.tsv", text);
  }
  std::cout << text;
  return kOk;
}

int cmd_infer(const Common& common, const std::string& ckpt, const std::string& audio,
              const std::string& single, const std::string& asr_lang, const std::string& st_lang,
              std::optional<std::size_t> max_len) {
  resolve(common, {});
  auto loaded = open_checkpoint(ckpt);
  auto& m = loaded.model;
  const auto wave = signal::read_wav(audio);
  const auto features = signal::fbank(wave);
  const auto limit = max_len.value_or(m.config().max_tgt_tokens + 1 - seqio::kGuidePrefixLength);
  const seqio::Vocabulary vocab;
  auto text = [&](const model::Hypothesis& h) { return vocab.decode(h.ids) + (h.truncated ? " [truncated]" : ""); };
  std::string out;
  if (single.empty()) {
    const auto dual = model::infer_dual(m, features, features.bandwidth, limit, seqio::parse_language(asr_lang),
                                        seqio::parse_language(st_lang));
    out = "ASR: " + text(dual.asr) + "\nST: " + text(dual.st) + "\n";
  } else {
    const auto task = parse_task_flag(single);
    const auto lang = seqio::parse_language(task == Task::ASR ? asr_lang : st_lang);
    const auto h = model::infer_single(m, features, features.bandwidth, task, lang, limit);
    out = (task == Task::ASR ? "ASR: " : "ST: ") + text(h) + "\n";
  }
  std::cout << out;
  return kOk;
}

int cmd_inspect(const Common& common, const std::string& ckpt) {
  const auto c = resolve(common, {});
  const auto cfg = ckpt.empty() ? c.model : open_checkpoint(ckpt).model.config();
  const auto counts = model::count_params(cfg);
  const auto b = model::param_breakdown(cfg);
  auto millions = [](std::uint64_t n) { return fmt::format("{:.2f}M", static_cast<double>(n) / 1e6); };
  std::string out;
  out += fmt::format("layers\t{}/{}\td_model\t{}\td_ff\t{}\tdecoder_d_ff\t{}\tvocab\t{}\tglu\t{}\ttied\t{}\n",
                     cfg.n_enc_layers, cfg.n_dec_layers, cfg.d_model, cfg.d_ff, cfg.decoder_d_ff(), cfg.vocab_size,
                     cfg.glu ? "on" : "off", cfg.tie_embeddings ? "yes" : "no");
  out += fmt::format("trainable\t{}\t{}\n", counts.trainable, millions(counts.trainable));
  out += fmt::format("active\t{}\t{}\n", counts.active, millions(counts.active));
  out += "module\tparams\n";
  out += fmt::format("input_projection\t{}\n", b.input_projection);
  out += fmt::format("encoder_attention\t{}\n", b.encoder_attention);
  out += fmt::format("encoder_ffn\t{}\n", b.encoder_ffn);
  out += fmt::format("encoder_norms\t{}\n", b.encoder_norms);
  out += fmt::format("embedding\t{}\n", b.embedding);
  out += fmt::format("output_projection\t{}\n", b.output_projection);
  out += fmt::format("decoder_attention\t{}\n", b.decoder_attention);
  out += fmt::format("decoder_ffn\t{}\n", b.decoder_ffn);
  out += fmt::format("decoder_norms\t{}\n", b.decoder_norms);
  out += fmt::format("encoder_experts\t{}\t{} x {} per layer, {} per expert\n", cfg.enc_smoe ? "on" : "off",
                     cfg.n_enc_layers, cfg.enc_smoe ? cfg.n_experts : 1, b.encoder_expert_size);
  out += fmt::format("decoder_experts\t{}\t{} x {} per layer, {} per expert\n", cfg.dec_smoe ? "on" : "off",
                     cfg.n_dec_layers, cfg.dec_smoe ? cfg.n_experts : 1, b.decoder_expert_size);
  out += fmt::format("idle_per_forward\t{}\n", b.duplicated);
  if (!common.out.empty()) {
    const auto dir = prepare_out(common.out);
    write_snapshot(dir, "inspect", c, ckpt.empty() ? "" : "# checkpoint = " + ckpt + "\n");
    write_file(dir / "inspect.tsv", out);
  }
  std::cout << out;
  return kOk;
}

int cmd_gradcheck(const Common& common, const std::string& task_flag, const std::string& bw_flag,
                  double tolerance, double step, std::size_t max_entries) {
  auto c = resolve(common, {});
  c.model.dropout = 0.0;
  const auto task = parse_task_flag(task_flag);
  const auto bw = moe::parse_bandwidth(bw_flag);
  const seqio::Vocabulary vocab;
  auto items = train::generate_items(c.spec, 1, 0.0, c.train.seed);
  train::ExampleOptions opts;
  opts.narrowband_only = bw == Bandwidth::NB;
  train::Dataset data;
  for (auto& e : train::build_dataset(c.spec, items, opts, vocab)) {
    if (e.target.task == task) data.push_back(std::move(e));
  }
  const auto batch = train::Batch::from_examples(data);
  model::Model m(c.model, c.train.seed);
  num::GradCheckOptions gc;
  gc.tolerance = tolerance;
  gc.step = step;
  gc.max_entries_per_param = max_entries;
  gc.seed = c.train.seed;
  const auto report =
      num::grad_check([&] { return train::batch_loss(m, batch, model::ForwardContext::eval()); }, m.named_params(), gc);
  std::string out = "param\tchecked\tmax_rel_error\tresult\n";
  for (const auto& e : report.entries) {
    out += fmt::format("{}\t{}\t{:.3e}\t{}\n", e.name, e.checked, e.max_rel_error, e.passed ? "ok" : "FAIL");
  }
  out += fmt::format("overall\t{}\t{:.3e}\t{}\n", report.entries.size(), report.worst(),
                     report.passed ? "PASS" : "FAIL");
  if (!common.out.empty()) {
    const auto dir = prepare_out(common.out);
    write_snapshot(dir, "gradcheck", c);
    write_file(dir / "gradcheck.tsv", out);
  }
  std::cout << out;
  return report.passed ? kOk : kNumeric;
}

int cmd_benchmark(const Common& common, const std::string& experiment) {
  if (experiment != "interference" && experiment != "nbwb") {
    throw ConfigError(fmt::format("unknown experiment `{}` (interference | nbwb)", experiment));
  }
  const bool nbwb = experiment == "nbwb";
  const auto c = resolve(common, nbwb ? train::ExperimentConfig::nbwb_defaults()
                                      : train::ExperimentConfig::interference_defaults());
  const auto dir = prepare_out(common.out);
  write_snapshot(dir, "benchmark --experiment " + experiment, c);
  std::ofstream log(dir / (experiment + ".log"));
  std::string report;
  if (nbwb) {
    const auto r = train::run_nbwb_experiment(c, &log);
    report = r.to_tsv();
  } else {
    const auto r = train::run_interference_benchmark(c, &log);
    report = r.to_tsv();
    for (std::size_t i = 0; i < r.control_asr.size(); ++i) {
      report += fmt::format("# control seed={} asr={:.4f} st={:.4f}\n", c.seeds[i], r.control_asr[i], r.control_st[i]);
    }
    if (r.spec_too_hard) report += "# spec too hard: a single-task control stayed below 0.99\n";
  }
  write_file(dir / (experiment + ".tsv"), report);
  std::cout << report;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supervised mixture-of-experts speech recognition and translation toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Common common;
  std::optional<std::size_t> n_items, max_len;
  std::string data_dir, ckpt, audio, single, asr_lang = "ko", st_lang = "en", condition = "wb";
  std::string task_flag = "st", bw_flag = "WB", experiment = "interference";
  double tolerance = 1e-3, fd_step = 1e-5;
  std::size_t max_entries = 16;

  auto* datagen = app.add_subcommand("datagen", "Write a synthetic WAV corpus with manifest");
  add_common(datagen, common, true);
  datagen->add_option("--items", n_items, "Number of WB utterances (default exp.n_train_items)");

  auto* trn = app.add_subcommand("train", "Train a model on interleaved ASR/ST batches");
  add_common(trn, common, true);
  trn->add_option("--data", data_dir, "Corpus directory holding manifest.tsv (default: synthetic in memory)");

  auto* ft = app.add_subcommand("finetune-nbwb", "Expand the encoder into WB/NB experts and fine-tune");
  add_common(ft, common, true);
  ft->add_option("--checkpoint", ckpt, "Donor checkpoint")->required();
  ft->add_option("--data", data_dir, "Mixed NB/WB corpus directory (default: synthetic twin subset)");

  auto* ev = app.add_subcommand("eval", "Greedy-decode a dataset and report token accuracy, WER and BLEU");
  add_common(ev, common, false);
  ev->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
  ev->add_option("--data", data_dir, "Corpus directory (default: held-out synthetic items)");
  ev->add_option("--condition", condition, "Synthetic audio condition: wb | nb");

  auto* inf = app.add_subcommand("infer", "Transcribe and translate one WAV file");
  add_common(inf, common, false);
  inf->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
  inf->add_option("--audio", audio, "16-bit mono WAV at 8 or 16 kHz")->required();
  inf->add_option("--single-task", single, "Decode one task only: asr | st");
  inf->add_option("--asr-lang", asr_lang, "Language tag for the transcription row");
  inf->add_option("--st-lang", st_lang, "Language tag for the translation row");
  inf->add_option("--max-len", max_len, "Maximum generated tokens per row");

  auto* ins = app.add_subcommand("inspect", "Trainable/active parameter report");
  add_common(ins, common, false);
  ins->add_option("--checkpoint", ckpt, "Inspect a checkpoint instead of the resolved config");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full model's gradients");
  add_common(gc, common, false);
  gc->add_option("--task", task_flag, "asr | st");
  gc->add_option("--bandwidth", bw_flag, "WB | NB");
  gc->add_option("--tolerance", tolerance, "Relative error bound");
  gc->add_option("--step", fd_step, "Central-difference step");
  gc->add_option("--max-entries", max_entries, "Sampled coordinates per parameter (0 = all)");

  auto* bench = app.add_subcommand("benchmark", "Run the interference benchmark or the NB/WB experiment");
  add_common(bench, common, true);
  bench->add_option("--experiment", experiment, "interference | nbwb");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*datagen) return cmd_datagen(common, n_items);
    if (*trn) return cmd_train(common, data_dir);
    if (*ft) return cmd_finetune(common, ckpt, data_dir);
    if (*ev) return cmd_eval(common, ckpt, data_dir, condition);
    if (*inf) return cmd_infer(common, ckpt, audio, single, asr_lang, st_lang, max_len);
    if (*ins) return cmd_inspect(common, ckpt);
    if (*gc) return cmd_gradcheck(common, task_flag, bw_flag, tolerance, fd_step, max_entries);
    if (*bench) return cmd_benchmark(common, experiment);
  } catch (const CheckpointFailure& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kCheckpoint;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const TooShortError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const LimitError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
  return kConfig;
}

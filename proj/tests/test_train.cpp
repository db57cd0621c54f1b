#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>
#include <regex>
#include <sstream>

#include "smoe/error.hpp"
#include "smoe/numerics/ops.hpp"
#include "smoe/numerics/tape.hpp"
#include "smoe/train/batch.hpp"
#include "smoe/train/dataset.hpp"
#include "smoe/train/optim.hpp"
#include "smoe/train/synthetic.hpp"
#include "smoe/train/trainer.hpp"
#include "test_util.hpp"

namespace smoe::train {
namespace {

using testing::random_features;
using testing::tiny_config;

const seqio::Vocabulary& vocab() {
  static const seqio::Vocabulary v;
  return v;
}

// Random features paired with ASR and ST targets; n examples per task.
Dataset toy_dataset(std::size_t n_asr, std::size_t n_st, Rng& rng, bool mix_bandwidth = false) {
  Dataset out;
  std::uniform_int_distribution<int> letter('a', 'p');
  for (std::size_t i = 0; i < n_asr + n_st; ++i) {
    const auto bw = mix_bandwidth && i % 3 == 0 ? Bandwidth::NB : Bandwidth::WB;
    const auto f = random_features(6 + i % 5, bw, rng);
    std::string text{static_cast<char>(letter(rng)), ' ', static_cast<char>(letter(rng))};
    out.push_back(make_example("u" + std::to_string(i), f.frames, bw, i < n_asr ? Task::ASR : Task::ST, text, vocab()));
  }
  return out;
}

model::ModelConfig with_dec_smoe(double dropout = 0.0) {
  auto c = tiny_config();
  c.dec_smoe = true;
  c.dropout = dropout;
  return c;
}

std::vector<std::vector<double>> snapshot(Model& m, const std::string& needle) {
  std::vector<std::vector<double>> out;
  m.for_each_param([&](const std::string& name, num::Tensor& t) {
    if (name.find(needle) != std::string::npos) out.emplace_back(t.data().begin(), t.data().end());
  });
  return out;
}

std::vector<Task> task_sequence(const std::vector<Batch>& batches) {
  std::vector<Task> out;
  for (const auto& b : batches) out.push_back(b.task());
  return out;
}

TEST(Stream, StrictAlternationOnEqualTasks) {
  auto rng = make_rng(1, "test");
  const auto data = toy_dataset(4, 4, rng);
  InterleavedStream s(data, 2, 7);
  EXPECT_EQ(task_sequence(s.epoch(0)), (std::vector<Task>{Task::ASR, Task::ST, Task::ASR, Task::ST}));
}

TEST(Stream, EpochEndsWhenDueTaskIsExhausted) {
  auto rng = make_rng(2, "test");
  const auto data = toy_dataset(10, 4, rng);
  InterleavedStream s(data, 2, 7);
  const auto tasks = task_sequence(s.epoch(0));
  EXPECT_EQ(tasks, (std::vector<Task>{Task::ASR, Task::ST, Task::ASR, Task::ST, Task::ASR}));
  for (std::size_t n_asr : {1u, 3u, 8u, 13u}) {
    for (std::size_t n_st : {1u, 4u, 9u}) {
      auto d = toy_dataset(n_asr, n_st, rng);
      const auto seq = task_sequence(InterleavedStream(d, 3, 1).epoch(0));
      const auto a = std::count(seq.begin(), seq.end(), Task::ASR);
      const auto b = static_cast<std::ptrdiff_t>(seq.size()) - a;
      EXPECT_LE(std::abs(a - b), 1);
      for (std::size_t i = 1; i < seq.size(); ++i) EXPECT_NE(seq[i], seq[i - 1]);
    }
  }
}

TEST(Stream, BatchesAreHomogeneousAndSeeded) {
  auto rng = make_rng(3, "test");
  const auto data = toy_dataset(9, 7, rng);
  for (auto mode : {Interleave::Strict, Interleave::Proportional}) {
    const InterleavedStream a(data, 2, 5, mode), b(data, 2, 5, mode), c(data, 2, 6, mode);
    auto ids = [](const std::vector<Batch>& batches) {
      std::vector<std::vector<seqio::TokenId>> out;
      for (const auto& batch : batches) {
        for (std::size_t i = 0; i < batch.size(); ++i) out.push_back(batch.target(i));
        for (std::size_t i = 0; i < batch.size(); ++i) EXPECT_EQ(seqio::task_of(batch.target(i)), batch.task());
      }
      return out;
    };
    EXPECT_EQ(ids(a.epoch(0)), ids(b.epoch(0)));
    EXPECT_NE(ids(a.epoch(0)), ids(c.epoch(0)));
    EXPECT_NE(ids(a.epoch(0)), ids(a.epoch(1)));
  }
  const auto all = InterleavedStream(data, 2, 5, Interleave::Proportional).epoch(0);
  std::size_t rows = 0;
  for (const auto& b : all) rows += b.size();
  EXPECT_EQ(rows, data.size());
}

TEST(Stream, MissingTaskIsAConfigError) {
  auto rng = make_rng(4, "test");
  const auto only_asr = toy_dataset(4, 0, rng);
  EXPECT_THROW(InterleavedStream(only_asr, 2, 1), ConfigError);
  const auto both = toy_dataset(2, 2, rng);
  EXPECT_THROW(InterleavedStream(both, 0, 1), ConfigError);
  EXPECT_EQ(parse_interleave(interleave_name(Interleave::Proportional)), Interleave::Proportional);
  EXPECT_THROW(parse_interleave("random"), ConfigError);
}

TEST(Batch, MixedTasksAreUnrepresentable) {
  auto rng = make_rng(5, "test");
  const auto data = toy_dataset(1, 1, rng);
  EXPECT_THROW(Batch::from_examples(data), ContractError);
}

TEST(Batch, PaddingKeepsExplicitLengths) {
  auto rng = make_rng(6, "test");
  const auto data = toy_dataset(3, 0, rng);
  const auto b = Batch::from_examples(data);
  std::size_t longest = 0;
  for (const auto& e : data) longest = std::max(longest, e.features.rows());
  EXPECT_EQ(b.padded_features().shape(), (num::Shape{3, longest, signal::kNumMels}));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(b.feature_lengths()[i], data[i].features.rows());
    EXPECT_TRUE(b.features(i).bitwise_equal(data[i].features));
    EXPECT_EQ(b.target(i), data[i].target.ids);
    EXPECT_EQ(b.target_lengths()[i], data[i].target.ids.size());
    for (auto p = b.target_lengths()[i]; p < b.padded_targets()[i].size(); ++p) {
      EXPECT_EQ(b.padded_targets()[i][p], seqio::id_of(seqio::GuidingToken::PAD));
    }
  }
}

TEST(Schedule, CosineEndpointsAndMidpoint) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 1e-3, 1e-5), 1e-3);
  EXPECT_NEAR(cosine_lr(100, 100, 1e-3, 1e-5), 1e-5, 1e-18);
  EXPECT_NEAR(cosine_lr(50, 100, 1e-3, 1e-5), (1e-3 + 1e-5) / 2, 1e-18);
  EXPECT_NEAR(cosine_lr(25, 100, 1.0, 0.0), 0.5 * (1 + std::cos(std::numbers::pi / 4)), 1e-15);
  EXPECT_THROW(cosine_lr(0, 100, 1e-5, 1e-3), ConfigError);
  EXPECT_THROW(cosine_lr(101, 100, 1e-3, 1e-5), ContractError);
}

TEST(Schedule, WarmupRampsLinearlyToPeak) {
  TrainConfig c;
  c.steps = 100;
  c.warmup_steps = 10;
  c.peak_lr = 1e-3;
  EXPECT_LT(scheduled_lr(c, 0), scheduled_lr(c, 5));
  EXPECT_NEAR(scheduled_lr(c, 9), 1e-3, 1e-12);
  for (std::size_t s = 10; s < 100; ++s) EXPECT_LE(scheduled_lr(c, s), scheduled_lr(c, s - 1) + 1e-18);
}

TEST(TrainStep, InactiveDecoderExpertIsIsolatedUnderSgd) {
  auto rng = make_rng(7, "test");
  Model m(with_dec_smoe(), 3);
  const auto data = toy_dataset(6, 6, rng);
  const auto batches = InterleavedStream(data, 3, 1).epoch(0);
  Sgd sgd(m.named_params(), 0.9);
  for (const auto& batch : batches) {
    const auto idle = moe::gate_decoder(batch.task()).selected() == 0 ? "decoder.0.ffn.expert1."
                                                                        : "decoder.0.ffn.expert0.";
    const auto busy = moe::gate_decoder(batch.task()).selected() == 0 ? "decoder.0.ffn.expert0."
                                                                        : "decoder.0.ffn.expert1.";
    {
      num::Tape tape;
      tape.backward(batch_loss(m, batch, model::ForwardContext::eval()));
      m.for_each_param([&](const std::string& name, num::Tensor& t) {
        if (name.find(idle) == std::string::npos || !t.has_grad()) return;
        for (double g : t.grad()) ASSERT_EQ(g, 0.0) << name;
      });
      sgd.zero_grad();
    }
    const auto idle_before = snapshot(m, idle);
    const auto busy_before = snapshot(m, busy);
    train_step(m, batch, sgd, 0.05);
    EXPECT_EQ(snapshot(m, idle), idle_before);
    EXPECT_NE(snapshot(m, busy), busy_before);
  }
}

TEST(TrainStep, AdamAlsoSkipsParametersWithoutGradient) {
  auto rng = make_rng(8, "test");
  Model m(with_dec_smoe(), 3);
  const auto data = toy_dataset(4, 4, rng);
  Adam adam(m.named_params());
  for (const auto& batch : InterleavedStream(data, 2, 1).epoch(0)) {
    const auto idle = moe::gate_decoder(batch.task()).selected() == 0 ? "expert1." : "expert0.";
    const auto before = snapshot(m, idle);
    train_step(m, batch, adam, 1e-2);
    EXPECT_EQ(snapshot(m, idle), before);
  }
}

TEST(TrainStep, ZeroLearningRateLeavesParametersUnchanged) {
  auto rng = make_rng(9, "test");
  Model m(with_dec_smoe(), 3);
  const auto data = toy_dataset(2, 0, rng);
  const auto before = snapshot(m, "");
  Sgd sgd(m.named_params(), 0.9);
  const double loss = train_step(m, Batch::from_examples(data), sgd, 0.0, {1.0});
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GT(loss, 0.0);
  EXPECT_EQ(snapshot(m, ""), before);
}

TEST(TrainStep, LossIgnoresPrefixAndPadding) {
  auto rng = make_rng(10, "test");
  Model m(tiny_config(), 4);
  const auto data = toy_dataset(2, 0, rng);
  const auto batch = Batch::from_examples(data);
  const double got = batch_loss(m, batch, model::ForwardContext::eval()).item();

  double total = 0.0;
  std::size_t count = 0;
  for (const auto& e : data) {
    const auto& ids = e.target.ids;
    const Bandwidth bw[] = {e.bandwidth};
    const auto mem = m.encode({e.features}, bw, model::ForwardContext::eval());
    const std::size_t row[] = {0};
    const Task task[] = {e.target.task};
    const auto logits = m.decode(mem, row, {{ids.begin(), ids.end() - 1}}, task, model::ForwardContext::eval());
    for (std::size_t p = seqio::kGuidePrefixLength - 1; p + 1 < ids.size(); ++p) {
      double mx = -1e300;
      for (std::size_t v = 0; v < logits.cols(); ++v) mx = std::max(mx, logits.at(p, v));
      double z = 0.0;
      for (std::size_t v = 0; v < logits.cols(); ++v) z += std::exp(logits.at(p, v) - mx);
      total += mx + std::log(z) - logits.at(p, static_cast<std::size_t>(ids[p + 1]));
      ++count;
    }
  }
  EXPECT_NEAR(got, total / static_cast<double>(count), 1e-12);
}

TEST(TrainStep, NonFiniteLossAbortsWithDiagnostics) {
  auto rng = make_rng(11, "test");
  Model m(tiny_config(), 4);
  const auto data = toy_dataset(0, 2, rng);
  m.named_params().front().tensor.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  Sgd sgd(m.named_params(), 0.0);
  try {
    StepOptions opts;
    opts.step = 17;
    train_step(m, Batch::from_examples(data), sgd, 0.25, opts);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 17"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lr 0.25"), std::string::npos) << msg;
    EXPECT_NE(msg.find("st"), std::string::npos) << msg;
  }
}

TEST(Train, MemorisesOneExample) {
  auto rng = make_rng(12, "test");
  Model m(tiny_config(), 5);
  const auto data = toy_dataset(1, 0, rng);
  TrainConfig c;
  c.steps = 200;
  c.batch_size = 1;
  c.single_task = true;
  c.peak_lr = 1e-2;
  c.optimizer.kind = "adam";
  const auto result = train(m, data, c);
  ASSERT_EQ(result.losses.size(), 200u);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    first += result.losses[i];
    last += result.losses[180 + i];
  }
  EXPECT_LT(last, 0.1 * first);
  const auto report = evaluate(m, data, vocab());
  EXPECT_EQ(report.asr.token_accuracy, 1.0);
}

TEST(Train, SameSeedSameLossesAndLogFormat) {
  auto rng = make_rng(13, "test");
  const auto data = toy_dataset(5, 5, rng);
  TrainConfig c;
  c.steps = 12;
  c.batch_size = 2;
  std::ostringstream log_a, log_b;
  Model a(with_dec_smoe(0.1), 6), b(with_dec_smoe(0.1), 6);
  const auto ra = train(a, data, c, &log_a);
  const auto rb = train(b, data, c, &log_b);
  EXPECT_EQ(ra.losses, rb.losses);
  EXPECT_EQ(log_a.str(), log_b.str());
  const std::regex line(R"(step=\d+ task=[AS] lr=[-+.e0-9]+ loss=[.0-9]+)");
  std::istringstream in(log_a.str());
  std::string l;
  std::size_t n = 0;
  while (std::getline(in, l)) {
    EXPECT_TRUE(std::regex_match(l, line)) << l;
    ++n;
  }
  EXPECT_EQ(n, 12u);
  for (std::size_t i = 0; i < ra.tasks.size(); ++i) EXPECT_EQ(ra.tasks[i], i % 2 ? Task::ST : Task::ASR);
}

TEST(Train, AccumulationGroupsOneTaskPerStep) {
  auto rng = make_rng(14, "test");
  const auto data = toy_dataset(8, 8, rng);
  TrainConfig c;
  c.steps = 6;
  c.batch_size = 2;
  c.accumulation = 2;
  Model m(tiny_config(), 1);
  const auto r = train(m, data, c);
  EXPECT_EQ(r.tasks, (std::vector<Task>{Task::ASR, Task::ST, Task::ASR, Task::ST, Task::ASR, Task::ST}));
}

TEST(TrainConfig, ValidationAndKeys) {
  ConfigMap m;
  m.apply_override("train.steps=5");
  m.apply_override("train.nbwb_mix_fraction=0.3");
  m.apply_override("train.interleave=proportional");
  const auto c = TrainConfig::from_map(m);
  EXPECT_EQ(c.steps, 5u);
  EXPECT_EQ(c.nbwb_mix_fraction, 0.3);
  EXPECT_EQ(c.interleave, Interleave::Proportional);
  EXPECT_EQ(TrainConfig{}.nbwb_mix_fraction, 0.15);
  TrainConfig bad;
  bad.nbwb_mix_fraction = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.peak_lr = 1e-6;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Synthetic, TasksConflictOnAlmostEveryInput) {
  const SyntheticTaskSpec spec;
  EXPECT_GE(measured_disagreement(spec, 2000, 1), 0.9);
  for (std::size_t s = 0; s < spec.alphabet_size; ++s) EXPECT_NE(spec.translate_symbol(s), s);
  EXPECT_EQ(spec.transcribe({0, 1, 15}), "a b p");
  EXPECT_EQ(spec.translate({0, 1, 15}), "d i o");
  auto bad = spec;
  bad.translate_multiplier = 4;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = spec;
  bad.high_base_hz = 7900.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Synthetic, AudioLayoutAndDeterminism) {
  const SyntheticTaskSpec spec;
  const auto w = spec.render_audio({1, 2, 3}, 9);
  EXPECT_EQ(w.samples.size(), 2 * spec.edge_samples + 3 * spec.samples_per_symbol);
  EXPECT_EQ(w.samples, spec.render_audio({1, 2, 3}, 9).samples);
  const auto a = generate_items(spec, 40, 0.15, 3), b = generate_items(spec, 40, 0.15, 3);
  std::size_t twins = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].symbols, b[i].symbols);
    EXPECT_EQ(a[i].wideband.samples, b[i].wideband.samples);
    EXPECT_EQ(a[i].has_narrowband_twin, b[i].has_narrowband_twin);
    EXPECT_GE(a[i].symbols.size(), spec.min_symbols);
    EXPECT_LE(a[i].symbols.size(), spec.max_symbols);
    twins += a[i].has_narrowband_twin;
  }
  EXPECT_EQ(twins, 6u);
}

TEST(Dataset, ConditionsAndTasks) {
  const SyntheticTaskSpec spec;
  const auto items = generate_items(spec, 10, 0.3, 4);
  ExampleOptions opts;
  opts.narrowband_twins = true;
  const auto data = build_dataset(spec, items, opts, vocab());
  EXPECT_EQ(data.size(), 2u * (10 + 3));
  EXPECT_EQ(count_task(data, Task::ASR), count_task(data, Task::ST));
  for (const auto& e : data) {
    EXPECT_EQ(e.target.language, default_language(e.target.task));
    EXPECT_EQ(e.features.cols(), signal::kNumMels);
  }
  ExampleOptions nb;
  nb.narrowband_only = true;
  for (const auto& e : build_dataset(spec, items, nb, vocab())) EXPECT_EQ(e.bandwidth, Bandwidth::NB);
}

TEST(Manifest, TextRoundTripAndErrors) {
  std::vector<ManifestRecord> records{{"utt1", "audio/utt1.wb.wav", Bandwidth::WB, Task::ASR, seqio::Language::KO, "a b"},
                                      {"utt1", "audio/utt1.nb.wav", Bandwidth::NB, Task::ST, seqio::Language::EN, "d e"}};
  const auto text = format_manifest(records);
  const auto back = parse_manifest(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].audio_path, "audio/utt1.nb.wav");
  EXPECT_EQ(back[1].bandwidth, Bandwidth::NB);
  EXPECT_EQ(back[1].task, Task::ST);
  EXPECT_EQ(back[1].text, "d e");
  EXPECT_THROW(parse_manifest("wrong header\n"), FormatError);
  try {
    parse_manifest(std::string(kManifestHeader) + "\nutt\tx.wav\tWB\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Manifest, CorpusOnDiskMatchesInMemoryDataset) {
  const auto dir = std::filesystem::temp_directory_path() / "smoe_test_corpus";
  std::filesystem::remove_all(dir);
  const SyntheticTaskSpec spec;
  const auto items = generate_items(spec, 4, 0.5, 5);
  write_synthetic_corpus(spec, items, dir);
  const auto loaded = load_manifest_dataset(dir / "manifest.tsv", vocab());
  ExampleOptions opts;
  opts.narrowband_twins = true;
  const auto direct = build_dataset(spec, items, opts, vocab());
  ASSERT_EQ(loaded.size(), direct.size());
  for (const auto& d : direct) {
    const auto it = std::find_if(loaded.begin(), loaded.end(), [&](const Example& e) {
      return e.id == d.id && e.bandwidth == d.bandwidth && e.target.task == d.target.task;
    });
    ASSERT_NE(it, loaded.end()) << d.id;
    EXPECT_EQ(it->target.ids, d.target.ids);
    ASSERT_EQ(it->features.shape(), d.features.shape());
    double diff = 0.0;
    for (std::size_t i = 0; i < d.features.size(); ++i) diff += std::abs(it->features[i] - d.features[i]);
    EXPECT_LT(diff / static_cast<double>(d.features.size()), 0.05);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace smoe::train

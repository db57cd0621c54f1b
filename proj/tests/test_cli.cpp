#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "smoe/train/dataset.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(SMOE_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string first_line_text(const fs::path& p) {
  std::string s = slurp(p);
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

std::string fmt_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "utt%05d", i);
  return buf;
}

const char* kSmallModel =
    "--set n_enc_layers=1 --set n_dec_layers=1 --set d_model=32 --set d_ff=32 --set n_heads=2 --set dropout=0 "
    "--set dec_smoe=1 --set max_src_frames=64 --set max_tgt_tokens=24";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("smoe_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

TEST_F(Cli, DatagenCountsTwinsAndIsDeterministic) {
  ASSERT_EQ(run("datagen --items 100 --seed 4 --out " + path("a")).code, 0);
  ASSERT_EQ(run("datagen --items 100 --seed 4 --out " + path("b")).code, 0);
  const auto records = smoe::train::read_manifest(dir_ / "a" / "manifest.tsv");
  std::size_t wb = 0, nb = 0;
  for (const auto& r : records) (r.bandwidth == smoe::moe::Bandwidth::WB ? wb : nb) += 1;
  EXPECT_EQ(wb, 2u * 100);
  EXPECT_EQ(nb, 2u * 15);
  EXPECT_EQ(slurp(dir_ / "a" / "manifest.tsv"), slurp(dir_ / "b" / "manifest.tsv"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "resolved_config.txt"));

  ASSERT_EQ(run("datagen --items 10 --set train.nbwb_mix_fraction=0 --out " + path("c")).code, 0);
  for (const auto& r : smoe::train::read_manifest(dir_ / "c" / "manifest.tsv")) {
    EXPECT_EQ(r.bandwidth, smoe::moe::Bandwidth::WB);
  }
}

TEST_F(Cli, ConfigErrorsExitOne) {
  EXPECT_EQ(run("inspect --set no_such_key=1").code, 1);
  EXPECT_EQ(run("inspect --config " + path("missing.cfg")).code, 1);
  EXPECT_EQ(run("inspect --set d_model=0").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  std::ofstream(dir_ / "bad.cfg") << "d_model = 64\nmystery = 3\n";
  EXPECT_EQ(run("inspect --config " + path("bad.cfg")).code, 1);
}

TEST_F(Cli, OverridesApplyAfterTheConfigFile) {
  std::ofstream(dir_ / "m.cfg") << "# toy with experts\nd_model = 32\ndec_smoe = 1\n";
  const auto r = run("inspect --config " + path("m.cfg") + " --set d_model=48 --out " + path("i"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("d_model\t48"), std::string::npos) << r.out;
  EXPECT_NE(slurp(dir_ / "i" / "resolved_config.txt").find("d_model = 48"), std::string::npos);
}

TEST_F(Cli, InspectReportsParity) {
  const auto base = run("inspect");
  const auto moe = run("inspect --set dec_smoe=1");
  ASSERT_EQ(base.code, 0);
  ASSERT_EQ(moe.code, 0);
  auto field = [](const std::string& out, const std::string& key) {
    const auto at = out.find("\n" + key + "\t");
    std::istringstream in(out.substr(at + key.size() + 2));
    std::uint64_t v = 0;
    in >> v;
    return v;
  };
  EXPECT_EQ(field(base.out, "trainable"), field(base.out, "active"));
  EXPECT_EQ(field(moe.out, "active"), field(base.out, "trainable"));
  EXPECT_GT(field(moe.out, "trainable"), field(moe.out, "active"));
}

TEST_F(Cli, MissingInputsFailClosed) {
  EXPECT_EQ(run("eval --checkpoint " + path("none.ckpt")).code, 2);
  std::ofstream(dir_ / "junk.ckpt") << "SMOEjunk";
  EXPECT_EQ(run("inspect --checkpoint " + path("junk.ckpt")).code, 2);
  ASSERT_EQ(run(std::string("train --set train.steps=2 --set exp.n_train_items=4 ") + kSmallModel + " --out " +
                path("t"))
                .code,
            0);
  const auto r = run("infer --checkpoint " + path("t/model.ckpt") + " --audio " + path("none.wav"));
  EXPECT_EQ(r.code, 3);
  EXPECT_TRUE(r.out.empty());
  std::ofstream(dir_ / "junk.wav") << "RIFF....WAVEjunk";
  EXPECT_EQ(run("infer --checkpoint " + path("t/model.ckpt") + " --audio " + path("junk.wav")).code, 3);
}

TEST_F(Cli, GradcheckPassesOnSmallModel) {
  const auto r = run("gradcheck --set n_enc_layers=1 --set n_dec_layers=1 --set d_model=8 --set d_ff=4 "
                     "--set n_heads=2 --set enc_smoe=1 --set dec_smoe=1 --max-entries 4");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST_F(Cli, MemorisedItemsDecodeToTheirTargets) {
  ASSERT_EQ(run("datagen --items 4 --seed 2 --set train.nbwb_mix_fraction=0 --out " + path("corpus")).code, 0);
  const auto train = run(std::string("train --data ") + path("corpus") + " " + kSmallModel +
                         " --set train.steps=400 --set train.batch_size=4 --set train.peak_lr=5e-3 "
                         "--set train.warmup_steps=20 --seed 2 --out " + path("run"));
  ASSERT_EQ(train.code, 0);
  const std::string ckpt = path("run/model.ckpt");
  for (int i = 0; i < 4; ++i) {
    const auto id = fmt_id(i);
    const auto wav = path("corpus/audio/" + id + ".wb.wav");
    const auto dual = run("infer --checkpoint " + ckpt + " --audio " + wav);
    ASSERT_EQ(dual.code, 0);
    const auto asr = first_line_text(dir_ / "corpus" / "text" / (id + ".asr.txt"));
    const auto st = first_line_text(dir_ / "corpus" / "text" / (id + ".st.txt"));
    EXPECT_EQ(dual.out, "ASR: " + asr + "\nST: " + st + "\n");
    const auto single = run("infer --checkpoint " + ckpt + " --audio " + wav + " --single-task asr");
    EXPECT_EQ(single.out, dual.out.substr(0, dual.out.find('\n') + 1));
  }
  const auto eval = run("eval --checkpoint " + ckpt + " --data " + path("corpus"));
  ASSERT_EQ(eval.code, 0);
  EXPECT_NE(eval.out.find("ASR\t4\t1.0000"), std::string::npos) << eval.out;
}

}  // namespace

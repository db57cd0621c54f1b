#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "smoe/error.hpp"
#include "smoe/signal/fbank.hpp"
#include "smoe/signal/wav_io.hpp"
#include "smoe/signal/waveform.hpp"

namespace smoe::signal {
namespace {

Waveform tone(double hz, double amplitude = 0.5, double seconds = 1.0) {
  SynthSpec s;
  s.tones.push_back({hz, amplitude});
  return synth_wave(s, 1, seconds);
}

// Mean over frames of every mel bin.
std::vector<double> mean_bins(const FbankFeatures& f) {
  std::vector<double> out(kNumMels, 0.0);
  for (std::size_t t = 0; t < f.num_frames(); ++t) {
    for (std::size_t b = 0; b < kNumMels; ++b) out[b] += f.frames.at(t, b);
  }
  for (auto& v : out) v /= static_cast<double>(f.num_frames());
  return out;
}

TEST(Waveform, RateDeterminesBandwidth) {
  EXPECT_EQ((Waveform{{}, 8000}).bandwidth(), Bandwidth::NB);
  EXPECT_EQ((Waveform{{}, 16000}).bandwidth(), Bandwidth::WB);
  EXPECT_THROW((Waveform{{}, 44100}).bandwidth(), ContractError);
}

TEST(Synth, PureToneLengthAndPeak) {
  const auto w = tone(440.0);
  EXPECT_EQ(w.samples.size(), 16000u);
  EXPECT_EQ(w.sample_rate, kWideRate);
  EXPECT_EQ(oracle::dominant_frequency(w.samples, w.sample_rate), 440);
}

TEST(Synth, ZeroAmplitudeIsSilentAndEmptyIsRejected) {
  SynthSpec s;
  s.tones.push_back({300.0, 0.0});
  for (double v : synth_wave(s, 3, 0.1).samples) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(synth_wave(SynthSpec{}, 3, 0.1), ConfigError);
  EXPECT_THROW(synth_wave(s, 3, 0.0), ConfigError);
}

TEST(Synth, SeedDeterminesNoiseAndPeakIsBounded) {
  SynthSpec s;
  s.tones.push_back({500.0, 2.0});
  s.noise_amplitude = 0.5;
  const auto a = synth_wave(s, 11, 0.5), b = synth_wave(s, 11, 0.5), c = synth_wave(s, 12, 0.5);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
  for (double v : a.samples) EXPECT_LE(std::abs(v), 0.95 + 1e-12);
}

TEST(Narrowband, HalvesLength) {
  const auto w = tone(1000.0, 0.5, 2.0);
  EXPECT_EQ(to_narrowband(w).samples.size(), 16000u);
  EXPECT_EQ(to_narrowband(Waveform{std::vector<double>(801, 0.1), 16000}).samples.size(), 400u);
  EXPECT_THROW(to_narrowband(Waveform{{0.0}, 8000}), ContractError);
  EXPECT_THROW(to_wideband(Waveform{{0.0}, 16000}), ContractError);
}

TEST(Narrowband, PassbandToneSurvives) {
  const auto w = tone(1000.0);
  const auto nb = to_narrowband(w);
  const double before = oracle::tone_amplitude(w.samples, 16000, 1000.0, 200);
  const double after = oracle::tone_amplitude(nb.samples, 8000, 1000.0, 100);
  EXPECT_NEAR(after / before, 1.0, 0.05);
}

TEST(Narrowband, StopbandToneIsRemoved) {
  const auto w = tone(6000.0);
  const auto nb = to_narrowband(w);
  EXPECT_LT(oracle::mean_square(nb.samples, 100) / oracle::mean_square(w.samples, 200), 0.01);
}

TEST(Narrowband, UpsamplingKeepsPassbandTone) {
  const auto back = to_wideband(to_narrowband(tone(1000.0)));
  EXPECT_EQ(back.samples.size(), 16000u);
  EXPECT_NEAR(oracle::tone_amplitude(back.samples, 16000, 1000.0, 200), 0.5, 0.025);
}

TEST(Narrowband, FilterHasUnitDcGainAndIsSymmetric) {
  const auto& h = antialias_taps();
  EXPECT_EQ(h.size(), 64u);
  double sum = 0.0;
  for (double v : h) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(h[i], h[h.size() - 1 - i], 1e-15);
}

TEST(Fbank, FrameCountFormula) {
  EXPECT_EQ(num_frames_for(16000), 98u);
  EXPECT_EQ(num_frames_for(400), 1u);
  EXPECT_EQ(num_frames_for(399), 0u);
  for (std::size_t n : {400u, 559u, 560u, 1234u, 16000u}) {
    const auto f = fbank(Waveform{std::vector<double>(n, 0.01), 16000});
    EXPECT_EQ(f.num_frames(), 1 + (n - 400) / 160);
    EXPECT_EQ(f.frames.cols(), kNumMels);
  }
}

TEST(Fbank, SilenceSitsExactlyOnTheFloor) {
  const auto f = fbank(Waveform{std::vector<double>(16000, 0.0), 16000});
  for (double v : f.frames.data()) EXPECT_EQ(v, std::log(kLogFloor));
}

TEST(Fbank, ToneEnergyPeaksAtNearestFilter) {
  const auto centres = mel_center_frequencies();
  ASSERT_EQ(centres.size(), kNumMels);
  for (double hz : {300.0, 1000.0, 2500.0, 6000.0}) {
    const auto bins = mean_bins(fbank(tone(hz)));
    const auto peak = static_cast<std::size_t>(std::max_element(bins.begin(), bins.end()) - bins.begin());
    std::size_t nearest = 0;
    for (std::size_t b = 1; b < kNumMels; ++b) {
      if (std::abs(centres[b] - hz) < std::abs(centres[nearest] - hz)) nearest = b;
    }
    EXPECT_LE(std::abs(static_cast<long>(peak) - static_cast<long>(nearest)), 1) << hz << " Hz";
  }
}

TEST(Fbank, NarrowbandDepressesHighBandOnly) {
  SynthSpec s;
  s.noise_amplitude = 0.3;
  const auto w = synth_wave(s, 7, 1.0);
  const auto nb = to_narrowband(w);
  EXPECT_EQ(nb.bandwidth(), Bandwidth::NB);
  const auto f_nb = fbank(nb);
  EXPECT_EQ(f_nb.bandwidth, Bandwidth::NB);
  EXPECT_EQ(f_nb.num_frames(), 98u);
  const auto wb = mean_bins(fbank(w));
  const auto low = mean_bins(f_nb);
  const auto centres = mel_center_frequencies();
  for (std::size_t b = 0; b < kNumMels; ++b) {
    if (centres[b] < 3200.0) EXPECT_NEAR(std::exp(low[b] - wb[b]), 1.0, 0.1) << b;
    if (centres[b] > 4600.0) EXPECT_LT(low[b] - wb[b], -std::log(1e4)) << b;
  }
}

TEST(Fbank, RejectsShortAndLongAudio) {
  EXPECT_THROW(fbank(Waveform{std::vector<double>(399, 0.0), 16000}), TooShortError);
  EXPECT_THROW(fbank(Waveform{std::vector<double>(30 * 16000 + 1, 0.0), 16000}), LimitError);
}

TEST(Wav, RoundTripQuantisesTo16Bits) {
  const auto dir = std::filesystem::temp_directory_path() / "smoe_test_wav";
  std::filesystem::create_directories(dir);
  for (const auto& w : {tone(700.0, 0.4, 0.2), to_narrowband(tone(700.0, 0.4, 0.2))}) {
    const auto path = (dir / "a.wav").string();
    write_wav(path, w);
    const auto back = read_wav(path);
    EXPECT_EQ(back.sample_rate, w.sample_rate);
    ASSERT_EQ(back.samples.size(), w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_NEAR(back.samples[i], w.samples[i], 1.0 / 32767);
  }
  const auto junk = (dir / "junk.wav").string();
  std::ofstream(junk) << "not audio";
  EXPECT_THROW(read_wav(junk), InputError);
  EXPECT_THROW(read_wav((dir / "missing.wav").string()), InputError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace smoe::signal

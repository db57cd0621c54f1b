#include "smoe/signal/fbank.hpp"

#include <cmath>
#include <complex>
#include <memory>
#include <numbers>

#include <fftw3.h>
#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe::signal {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

constexpr std::size_t kBins = kFftSize / 2 + 1;

struct MelBank {
  // weights[m][k] for FFT bin k
  std::vector<std::vector<double>> weights;
  std::vector<double> centers;
};

MelBank make_mel_bank() {
  MelBank bank;
  const double lo = hz_to_mel(0.0), hi = hz_to_mel(kWideRate / 2.0);
  std::vector<double> edges(kNumMels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (kNumMels + 1));
  }
  bank.weights.assign(kNumMels, std::vector<double>(kBins, 0.0));
  for (std::size_t m = 0; m < kNumMels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    bank.centers.push_back(centre);
    for (std::size_t k = 0; k < kBins; ++k) {
      const double f = static_cast<double>(k) * kWideRate / kFftSize;
      if (f > left && f < centre) bank.weights[m][k] = (f - left) / (centre - left);
      else if (f >= centre && f < right) bank.weights[m][k] = (right - f) / (right - centre);
    }
  }
  return bank;
}

const MelBank& mel_bank() {
  static const MelBank bank = make_mel_bank();
  return bank;
}

const std::vector<double>& hann_window() {
  static const std::vector<double> window = [] {
    std::vector<double> w(kWindowSamples);
    for (std::size_t n = 0; n < w.size(); ++n) {
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                  static_cast<double>(kWindowSamples - 1));
    }
    return w;
  }();
  return window;
}

// Owns one real-to-complex FFTW plan and its buffers. FFTW planning is not
// thread-safe, so each thread keeps its own instance.
class PowerSpectrum {
 public:
  PowerSpectrum()
      : in_(static_cast<double*>(fftw_malloc(sizeof(double) * kFftSize))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * kBins))) {
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(kFftSize), in_, out_, FFTW_ESTIMATE);
  }
  ~PowerSpectrum() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  PowerSpectrum(const PowerSpectrum&) = delete;
  PowerSpectrum& operator=(const PowerSpectrum&) = delete;

  // |FFT(window ∘ frame)|² for bins 0..N/2.
  void compute(const double* frame, std::vector<double>& power) {
    const auto& w = hann_window();
    for (std::size_t n = 0; n < kFftSize; ++n) in_[n] = n < kWindowSamples ? frame[n] * w[n] : 0.0;
    fftw_execute(plan_);
    power.resize(kBins);
    for (std::size_t k = 0; k < kBins; ++k) power[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace

std::size_t num_frames_for(std::size_t n_samples) {
  if (n_samples < kWindowSamples) return 0;
  return 1 + (n_samples - kWindowSamples) / kHopSamples;
}

std::vector<double> mel_center_frequencies() { return mel_bank().centers; }

FbankFeatures fbank(const Waveform& w) {
  const Bandwidth bw = w.bandwidth();
  if (w.duration() > kMaxDurationSeconds) {
    throw LimitError(fmt::format("audio of {:.2f} s exceeds the {} s limit", w.duration(),
                                 kMaxDurationSeconds));
  }
  const Waveform wide = bw == Bandwidth::NB ? to_wideband(w) : w;
  const auto frames = num_frames_for(wide.samples.size());
  if (frames == 0) {
    throw TooShortError(fmt::format("audio of {} samples is shorter than one {}-sample window",
                                    wide.samples.size(), kWindowSamples));
  }
  if (frames > kMaxFrames) {
    throw LimitError(fmt::format("{} frames exceed the {} frame limit", frames, kMaxFrames));
  }
  thread_local PowerSpectrum spectrum;
  const auto& bank = mel_bank();
  std::vector<double> out(frames * kNumMels);
  std::vector<double> power;
  for (std::size_t f = 0; f < frames; ++f) {
    spectrum.compute(wide.samples.data() + f * kHopSamples, power);
    for (std::size_t m = 0; m < kNumMels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < kBins; ++k) e += bank.weights[m][k] * power[k];
      out[f * kNumMels + m] = std::log(std::max(e, kLogFloor));
    }
  }
  return {num::Tensor({frames, kNumMels}, std::move(out)), bw};
}

}  // namespace smoe::signal

#pragma once

#include <vector>

#include "smoe/numerics/tensor.hpp"
#include "smoe/signal/waveform.hpp"

namespace smoe::signal {

constexpr std::size_t kNumMels = 80;
constexpr std::size_t kWindowSamples = 400;  // 25 ms at 16 kHz
constexpr std::size_t kHopSamples = 160;     // 10 ms at 16 kHz
constexpr std::size_t kFftSize = 512;
constexpr std::size_t kMaxFrames = 3000;
constexpr double kLogFloor = 1e-10;

// Log-Mel filterbank frames [n_frames × 80] plus the bandwidth label of the
// audio they came from.
struct FbankFeatures {
  num::Tensor frames;
  Bandwidth bandwidth = Bandwidth::WB;

  std::size_t num_frames() const { return frames.rows(); }
};

// 1 + floor((n - window) / hop); zero when n < window.
std::size_t num_frames_for(std::size_t n_samples);

// Centre frequencies of the 80 triangular filters (HTK mel scale, 0..8 kHz).
std::vector<double> mel_center_frequencies();

// NB input is first brought back to 16 kHz so both conditions share one frame
// geometry. Throws TooShortError below one window, LimitError past 30 s or
// 3000 frames.
FbankFeatures fbank(const Waveform& w);

}  // namespace smoe::signal

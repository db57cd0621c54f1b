#pragma once

#include <cstdint>
#include <vector>

#include "smoe/moe/gating.hpp"

namespace smoe::signal {

using moe::Bandwidth;

constexpr int kWideRate = 16000;
constexpr int kNarrowRate = 8000;
constexpr double kMaxDurationSeconds = 30.0;

// Mono samples in [-1, 1]. NB audio is 8 kHz, WB audio 16 kHz.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kWideRate;

  Bandwidth bandwidth() const;
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct Tone {
  double frequency_hz = 440.0;
  double amplitude = 0.5;
  double start_s = 0.0;
  double duration_s = -1.0;  // negative: until the end
  double ramp_s = 0.0;       // raised-cosine onset/offset
};

struct SynthSpec {
  std::vector<Tone> tones;
  double noise_amplitude = 0.0;  // std-dev of additive Gaussian noise

  bool empty() const { return tones.empty() && noise_amplitude == 0.0; }
};

// 16 kHz rendering of `spec`; noise drawn from `seed`. The result is scaled
// down when needed so that its peak does not exceed 0.95.
Waveform synth_wave(const SynthSpec& spec, std::uint64_t seed, double duration_s);

// Anti-alias lowpass, then keep every other sample (16 kHz -> 8 kHz).
Waveform to_narrowband(const Waveform& w);
// Zero insertion plus the same lowpass (8 kHz -> 16 kHz), gain-compensated.
Waveform to_wideband(const Waveform& w);

// The 64-tap Hamming-windowed sinc used by both rate conversions,
// cutoff 0.475 x (16 kHz Nyquist) = 3.8 kHz, unit DC gain.
const std::vector<double>& antialias_taps();

}  // namespace smoe::signal

#include "smoe/signal/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/core.h>

#include "smoe/error.hpp"
#include "smoe/util/random.hpp"

namespace smoe::signal {

namespace {

constexpr std::size_t kTaps = 64;  // filter order 63
constexpr double kCutoffFraction = 0.475;

std::vector<double> design_taps() {
  const double fc = kCutoffFraction * 0.5;  // cycles per sample at 16 kHz
  const double centre = static_cast<double>(kTaps - 1) / 2.0;
  std::vector<double> h(kTaps);
  double dc = 0.0;
  for (std::size_t n = 0; n < kTaps; ++n) {
    const double m = static_cast<double>(n) - centre;
    const double sinc = 2.0 * fc * (m == 0.0 ? 1.0 : std::sin(2.0 * std::numbers::pi * fc * m) /
                                                        (2.0 * std::numbers::pi * fc * m));
    const double window =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / (kTaps - 1));
    h[n] = sinc * window;
    dc += h[n];
  }
  for (auto& v : h) v /= dc;
  return h;
}

// y[i] = Σ h[n] x[i + delay - n], zero outside the signal.
double filter_at(const std::vector<double>& x, std::ptrdiff_t i) {
  const auto& h = antialias_taps();
  const std::ptrdiff_t delay = static_cast<std::ptrdiff_t>(kTaps / 2) - 1;
  double acc = 0.0;
  for (std::size_t n = 0; n < h.size(); ++n) {
    const std::ptrdiff_t j = i + delay - static_cast<std::ptrdiff_t>(n);
    if (j >= 0 && j < static_cast<std::ptrdiff_t>(x.size())) acc += h[n] * x[static_cast<std::size_t>(j)];
  }
  return acc;
}

}  // namespace

Bandwidth Waveform::bandwidth() const {
  if (sample_rate == kWideRate) return Bandwidth::WB;
  if (sample_rate == kNarrowRate) return Bandwidth::NB;
  throw ContractError(fmt::format("unsupported sample rate {}", sample_rate));
}

const std::vector<double>& antialias_taps() {
  static const std::vector<double> taps = design_taps();
  return taps;
}

Waveform synth_wave(const SynthSpec& spec, std::uint64_t seed, double duration_s) {
  if (spec.empty()) throw ConfigError("synth_wave: empty spec");
  if (!(duration_s > 0.0)) throw ConfigError(fmt::format("synth_wave: duration {} must be > 0", duration_s));
  const auto n = static_cast<std::size_t>(std::llround(duration_s * kWideRate));
  Waveform w{std::vector<double>(n, 0.0), kWideRate};
  for (const auto& tone : spec.tones) {
    const auto begin = static_cast<std::size_t>(std::max(0.0, tone.start_s) * kWideRate);
    const std::size_t end =
        tone.duration_s < 0.0
            ? n
            : std::min(n, begin + static_cast<std::size_t>(std::llround(tone.duration_s * kWideRate)));
    const auto ramp = static_cast<std::size_t>(tone.ramp_s * kWideRate);
    for (std::size_t i = begin; i < end; ++i) {
      const double t = static_cast<double>(i) / kWideRate;
      double env = 1.0;
      if (ramp > 0) {
        const auto from_edge = std::min(i - begin, end - 1 - i);
        if (from_edge < ramp) {
          env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(from_edge) / ramp);
        }
      }
      w.samples[i] += tone.amplitude * env * std::sin(2.0 * std::numbers::pi * tone.frequency_hz * t);
    }
  }
  if (spec.noise_amplitude > 0.0) {
    Rng rng(derive_seed(seed, "synth_noise"));
    std::normal_distribution<double> noise(0.0, spec.noise_amplitude);
    for (auto& s : w.samples) s += noise(rng);
  }
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.95) {
    for (auto& s : w.samples) s *= 0.95 / peak;
  }
  return w;
}

Waveform to_narrowband(const Waveform& w) {
  if (w.sample_rate != kWideRate) {
    throw ContractError(fmt::format("to_narrowband expects 16 kHz input, got {} Hz", w.sample_rate));
  }
  Waveform out{std::vector<double>(w.samples.size() / 2), kNarrowRate};
  for (std::size_t m = 0; m < out.samples.size(); ++m) {
    out.samples[m] = filter_at(w.samples, static_cast<std::ptrdiff_t>(2 * m));
  }
  return out;
}

Waveform to_wideband(const Waveform& w) {
  if (w.sample_rate != kNarrowRate) {
    throw ContractError(fmt::format("to_wideband expects 8 kHz input, got {} Hz", w.sample_rate));
  }
  std::vector<double> stuffed(w.samples.size() * 2, 0.0);
  for (std::size_t m = 0; m < w.samples.size(); ++m) stuffed[2 * m] = 2.0 * w.samples[m];
  Waveform out{std::vector<double>(stuffed.size()), kWideRate};
  for (std::size_t i = 0; i < stuffed.size(); ++i) {
    out.samples[i] = filter_at(stuffed, static_cast<std::ptrdiff_t>(i));
  }
  return out;
}

}  // namespace smoe::signal

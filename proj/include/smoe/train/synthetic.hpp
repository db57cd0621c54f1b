#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smoe/signal/waveform.hpp"
#include "smoe/util/config_map.hpp"
#include "smoe/util/random.hpp"

namespace smoe::train {

// Conflicting task pair over one input distribution. Inputs are random strings
// over a small alphabet; the "transcribe" analog copies the string and the
// "translate" analog maps every symbol through a fixed derangement. Each
// symbol is rendered as audio: a low-band tone (kept by narrowband conversion)
// plus a high-band tone (removed by it).
struct SyntheticTaskSpec {
  std::size_t alphabet_size = 16;
  std::size_t min_symbols = 3;
  std::size_t max_symbols = 6;
  std::size_t translate_multiplier = 5;  // translate(i) = (5i + 3) mod alphabet
  std::size_t translate_offset = 3;

  std::size_t samples_per_symbol = 320;  // two fbank frames
  std::size_t edge_samples = 120;        // silence before the first symbol and after the last
  double low_base_hz = 250.0;
  double low_step_hz = 150.0;
  double high_base_hz = 4400.0;
  double high_step_hz = 220.0;
  double low_amplitude = 0.3;
  double high_amplitude = 0.3;
  double noise_amplitude = 0.01;

  static SyntheticTaskSpec from_map(const ConfigMap& map) { return from_map(map, SyntheticTaskSpec{}); }
  static SyntheticTaskSpec from_map(const ConfigMap& map, const SyntheticTaskSpec& base);
  void validate() const;
  // Every `synth.*` key, in the `key = value` grammar.
  std::string to_text() const;

  std::size_t translate_symbol(std::size_t s) const;
  // Symbols as space-separated letters starting at 'a'.
  std::string render_text(const std::vector<std::size_t>& symbols) const;
  std::string transcribe(const std::vector<std::size_t>& symbols) const;
  std::string translate(const std::vector<std::size_t>& symbols) const;

  std::vector<std::size_t> sample_symbols(Rng& rng) const;
  signal::Waveform render_audio(const std::vector<std::size_t>& symbols, std::uint64_t seed) const;
};

// Fraction of `n` sampled inputs on which the two tasks' targets differ.
double measured_disagreement(const SyntheticTaskSpec& spec, std::size_t n, std::uint64_t seed);

struct SyntheticItem {
  std::string id;
  std::vector<std::size_t> symbols;
  signal::Waveform wideband;
  bool has_narrowband_twin = false;
};

// `n_items` WB utterances; round(n_items x nbwb_mix) of them, picked by seed,
// are marked for an NB twin.
std::vector<SyntheticItem> generate_items(const SyntheticTaskSpec& spec, std::size_t n_items,
                                          double nbwb_mix, std::uint64_t seed);

}  // namespace smoe::train

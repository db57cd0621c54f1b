#include "smoe/train/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe::train {

SyntheticTaskSpec SyntheticTaskSpec::from_map(const ConfigMap& m, const SyntheticTaskSpec& base) {
  SyntheticTaskSpec s = base;
  auto size = [&](const std::string& key, std::size_t fallback) {
    const auto v = m.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(fmt::format("key `{}` must be non-negative", key));
    return static_cast<std::size_t>(v);
  };
  s.alphabet_size = size("synth.alphabet_size", s.alphabet_size);
  s.min_symbols = size("synth.min_symbols", s.min_symbols);
  s.max_symbols = size("synth.max_symbols", s.max_symbols);
  s.translate_multiplier = size("synth.translate_multiplier", s.translate_multiplier);
  s.translate_offset = size("synth.translate_offset", s.translate_offset);
  s.samples_per_symbol = size("synth.samples_per_symbol", s.samples_per_symbol);
  s.edge_samples = size("synth.edge_samples", s.edge_samples);
  s.low_base_hz = m.get_double("synth.low_base_hz", s.low_base_hz);
  s.low_step_hz = m.get_double("synth.low_step_hz", s.low_step_hz);
  s.high_base_hz = m.get_double("synth.high_base_hz", s.high_base_hz);
  s.high_step_hz = m.get_double("synth.high_step_hz", s.high_step_hz);
  s.low_amplitude = m.get_double("synth.low_amplitude", s.low_amplitude);
  s.high_amplitude = m.get_double("synth.high_amplitude", s.high_amplitude);
  s.noise_amplitude = m.get_double("synth.noise_amplitude", s.noise_amplitude);
  s.validate();
  return s;
}

std::string SyntheticTaskSpec::to_text() const {
  std::string out;
  auto line = [&](const char* k, const auto& v) { out += fmt::format("synth.{} = {}\n", k, v); };
  auto real = [&](const char* k, double v) { line(k, fmt::format("{:.17g}", v)); };
  line("alphabet_size", alphabet_size);
  line("min_symbols", min_symbols);
  line("max_symbols", max_symbols);
  line("translate_multiplier", translate_multiplier);
  line("translate_offset", translate_offset);
  line("samples_per_symbol", samples_per_symbol);
  line("edge_samples", edge_samples);
  real("low_base_hz", low_base_hz);
  real("low_step_hz", low_step_hz);
  real("high_base_hz", high_base_hz);
  real("high_step_hz", high_step_hz);
  real("low_amplitude", low_amplitude);
  real("high_amplitude", high_amplitude);
  real("noise_amplitude", noise_amplitude);
  return out;
}

void SyntheticTaskSpec::validate() const {
  if (alphabet_size < 2 || alphabet_size > 26) throw ConfigError("synth: alphabet_size must be in [2, 26]");
  if (min_symbols == 0 || min_symbols > max_symbols) throw ConfigError("synth: need 0 < min_symbols <= max_symbols");
  if (std::gcd(translate_multiplier, alphabet_size) != 1) {
    throw ConfigError("synth: translate multiplier must be coprime with the alphabet size");
  }
  for (std::size_t i = 0; i < alphabet_size; ++i) {
    if (translate_symbol(i) == i) throw ConfigError(fmt::format("synth: translation fixes symbol {}", i));
  }
  const double top_low = low_base_hz + low_step_hz * static_cast<double>(alphabet_size - 1);
  const double top_high = high_base_hz + high_step_hz * static_cast<double>(alphabet_size - 1);
  if (low_base_hz <= 0.0 || top_low >= high_base_hz || top_high >= signal::kWideRate / 2.0) {
    throw ConfigError("synth: tone bands must be ordered and below 8 kHz");
  }
  if (samples_per_symbol == 0) throw ConfigError("synth: samples_per_symbol must be positive");
}

std::size_t SyntheticTaskSpec::translate_symbol(std::size_t s) const {
  return (translate_multiplier * s + translate_offset) % alphabet_size;
}

std::string SyntheticTaskSpec::render_text(const std::vector<std::size_t>& symbols) const {
  std::string out;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i) out += ' ';
    out += static_cast<char>('a' + symbols[i]);
  }
  return out;
}

std::string SyntheticTaskSpec::transcribe(const std::vector<std::size_t>& symbols) const {
  return render_text(symbols);
}

std::string SyntheticTaskSpec::translate(const std::vector<std::size_t>& symbols) const {
  std::vector<std::size_t> mapped;
  for (auto s : symbols) mapped.push_back(translate_symbol(s));
  return render_text(mapped);
}

std::vector<std::size_t> SyntheticTaskSpec::sample_symbols(Rng& rng) const {
  std::uniform_int_distribution<std::size_t> len(min_symbols, max_symbols);
  std::uniform_int_distribution<std::size_t> sym(0, alphabet_size - 1);
  std::vector<std::size_t> out(len(rng));
  for (auto& s : out) s = sym(rng);
  return out;
}

signal::Waveform SyntheticTaskSpec::render_audio(const std::vector<std::size_t>& symbols,
                                                 std::uint64_t seed) const {
  const double rate = signal::kWideRate;
  const double edge = static_cast<double>(edge_samples) / rate;
  const double span = static_cast<double>(samples_per_symbol) / rate;
  const double ramp = std::min(0.004, span / 4.0);
  signal::SynthSpec synth;
  synth.noise_amplitude = noise_amplitude;
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const double start = edge + span * static_cast<double>(k);
    const double s = static_cast<double>(symbols[k]);
    synth.tones.push_back({low_base_hz + low_step_hz * s, low_amplitude, start, span, ramp});
    synth.tones.push_back({high_base_hz + high_step_hz * s, high_amplitude, start, span, ramp});
  }
  const auto n = 2 * edge_samples + samples_per_symbol * symbols.size();
  return signal::synth_wave(synth, seed, static_cast<double>(n) / rate);
}

double measured_disagreement(const SyntheticTaskSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("measured_disagreement: need at least one sample");
  auto rng = make_rng(seed, "disagreement");
  std::size_t differ = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto symbols = spec.sample_symbols(rng);
    if (spec.transcribe(symbols) != spec.translate(symbols)) ++differ;
  }
  return static_cast<double>(differ) / static_cast<double>(n);
}

std::vector<SyntheticItem> generate_items(const SyntheticTaskSpec& spec, std::size_t n_items,
                                          double nbwb_mix, std::uint64_t seed) {
  if (nbwb_mix < 0.0 || nbwb_mix > 1.0) throw ConfigError("nbwb_mix_fraction must be in [0, 1]");
  spec.validate();
  auto rng = make_rng(seed, "data");
  std::vector<SyntheticItem> items(n_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    items[i].id = fmt::format("utt{:05d}", i);
    items[i].symbols = spec.sample_symbols(rng);
    items[i].wideband = spec.render_audio(items[i].symbols, derive_seed(seed, items[i].id));
  }
  const auto n_twins = static_cast<std::size_t>(std::llround(nbwb_mix * static_cast<double>(n_items)));
  std::vector<std::size_t> order(n_items);
  std::iota(order.begin(), order.end(), 0);
  auto pick = make_rng(seed, "nbwb_pick");
  std::shuffle(order.begin(), order.end(), pick);
  for (std::size_t i = 0; i < n_twins; ++i) items[order[i]].has_narrowband_twin = true;
  return items;
}

}  // namespace smoe::train

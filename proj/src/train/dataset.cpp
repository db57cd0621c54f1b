#include "smoe/train/dataset.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <fmt/core.h>

#include "smoe/error.hpp"
#include "smoe/signal/fbank.hpp"
#include "smoe/signal/wav_io.hpp"

namespace smoe::train {

namespace fs = std::filesystem;

seqio::Language default_language(Task task) {
  return task == Task::ASR ? seqio::Language::KO : seqio::Language::EN;
}

Example make_example(const std::string& id, const num::Tensor& features, Bandwidth bw, Task task,
                     const std::string& text, const seqio::Vocabulary& vocab) {
  return {id, features, bw, seqio::build_target_sequence(task, default_language(task), text, vocab), text};
}

Dataset build_dataset(const SyntheticTaskSpec& spec, const std::vector<SyntheticItem>& items,
                      const ExampleOptions& options, const seqio::Vocabulary& vocab) {
  Dataset out;
  auto add_pair = [&](const SyntheticItem& item, const signal::FbankFeatures& f) {
    out.push_back(make_example(item.id, f.frames, f.bandwidth, Task::ASR, spec.transcribe(item.symbols), vocab));
    out.push_back(make_example(item.id, f.frames, f.bandwidth, Task::ST, spec.translate(item.symbols), vocab));
  };
  for (const auto& item : items) {
    const bool nb = options.narrowband_only || (options.narrowband_twins && item.has_narrowband_twin);
    if (options.wideband && !options.narrowband_only) add_pair(item, signal::fbank(item.wideband));
    if (nb) add_pair(item, signal::fbank(signal::to_narrowband(item.wideband)));
  }
  return out;
}

std::size_t count_task(const Dataset& data, Task task) {
  std::size_t n = 0;
  for (const auto& e : data) n += e.target.task == task ? 1 : 0;
  return n;
}

std::string format_manifest(const std::vector<ManifestRecord>& records) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : records) {
    if (r.text.find_first_of("\t\n") != std::string::npos || r.audio_path.find_first_of("\t\n") != std::string::npos) {
      throw FormatError(fmt::format("manifest record `{}` contains a tab or newline", r.id));
    }
    out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", r.id, r.audio_path, moe::to_string(r.bandwidth),
                       moe::to_string(r.task), seqio::to_string(r.language), r.text);
  }
  return out;
}

std::vector<ManifestRecord> parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw FormatError(fmt::format("manifest: first line must be `{}`", kManifestHeader));
  }
  std::vector<ManifestRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 6) {
      throw FormatError(fmt::format("manifest line {}: expected 6 tab-separated fields, got {}", lineno, fields.size()));
    }
    try {
      out.push_back({fields[0], fields[1], moe::parse_bandwidth(fields[2]), moe::parse_task(fields[3]),
                     seqio::parse_language(fields[4]), fields[5]});
    } catch (const ConfigError& e) {
      throw FormatError(fmt::format("manifest line {}: {}", lineno, e.what()));
    }
  }
  return out;
}

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open manifest {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str());
}

std::vector<ManifestRecord> write_synthetic_corpus(const SyntheticTaskSpec& spec,
                                                   const std::vector<SyntheticItem>& items, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "audio", ec);
  fs::create_directories(dir / "text", ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));

  auto write_text = [&](const fs::path& p, const std::string& s) {
    std::ofstream out(p);
    if (!out) throw IoError(fmt::format("cannot write {}", p.string()));
    out << s << '\n';
  };
  std::vector<ManifestRecord> records;
  for (const auto& item : items) {
    const auto asr = spec.transcribe(item.symbols);
    const auto st = spec.translate(item.symbols);
    write_text(dir / "text" / (item.id + ".asr.txt"), asr);
    write_text(dir / "text" / (item.id + ".st.txt"), st);
    auto emit = [&](const std::string& rel, Bandwidth bw) {
      records.push_back({item.id, rel, bw, Task::ASR, default_language(Task::ASR), asr});
      records.push_back({item.id, rel, bw, Task::ST, default_language(Task::ST), st});
    };
    const auto wb = "audio/" + item.id + ".wb.wav";
    signal::write_wav((dir / wb).string(), item.wideband);
    emit(wb, Bandwidth::WB);
    if (item.has_narrowband_twin) {
      const auto nb = "audio/" + item.id + ".nb.wav";
      signal::write_wav((dir / nb).string(), signal::to_narrowband(item.wideband));
      emit(nb, Bandwidth::NB);
    }
  }
  std::ofstream out(dir / "manifest.tsv", std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", (dir / "manifest.tsv").string()));
  out << format_manifest(records);
  return records;
}

Dataset load_manifest_dataset(const fs::path& manifest, const seqio::Vocabulary& vocab) {
  const auto records = read_manifest(manifest);
  const auto base = manifest.parent_path();
  std::map<std::string, signal::FbankFeatures> cache;
  Dataset out;
  for (const auto& r : records) {
    auto it = cache.find(r.audio_path);
    if (it == cache.end()) {
      const auto wave = signal::read_wav((base / r.audio_path).string());
      if (wave.bandwidth() != r.bandwidth) {
        throw InputError(fmt::format("{}: manifest says {} but the file is {}", r.audio_path,
                                     moe::to_string(r.bandwidth), moe::to_string(wave.bandwidth())));
      }
      it = cache.emplace(r.audio_path, signal::fbank(wave)).first;
    }
    out.push_back({r.id, it->second.frames, r.bandwidth,
                   seqio::build_target_sequence(r.task, r.language, r.text, vocab), r.text});
  }
  return out;
}

}  // namespace smoe::train

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "smoe/numerics/tensor.hpp"
#include "smoe/seqio/target.hpp"
#include "smoe/train/synthetic.hpp"

namespace smoe::train {

using moe::Bandwidth;
using moe::Task;

// One supervised utterance: features of one audio condition and one task's target.
struct Example {
  std::string id;  // shared by the ASR/ST pair and by NB twins
  num::Tensor features;
  Bandwidth bandwidth = Bandwidth::WB;
  seqio::TargetSequence target;
  std::string text;
};

using Dataset = std::vector<Example>;

seqio::Language default_language(Task task);

// Language/task layout used everywhere: ASR targets carry the KO tag, ST the EN tag.
Example make_example(const std::string& id, const num::Tensor& features, Bandwidth bw, Task task,
                     const std::string& text, const seqio::Vocabulary& vocab);

struct ExampleOptions {
  bool wideband = true;
  bool narrowband_twins = false;  // NB copies of items marked for a twin
  bool narrowband_only = false;   // NB copies of every item, no WB
};

// ASR and ST examples for every selected audio condition of every item.
Dataset build_dataset(const SyntheticTaskSpec& spec, const std::vector<SyntheticItem>& items,
                      const ExampleOptions& options, const seqio::Vocabulary& vocab);

std::size_t count_task(const Dataset& data, Task task);

struct ManifestRecord {
  std::string id;
  std::string audio_path;  // relative to the manifest directory
  Bandwidth bandwidth = Bandwidth::WB;
  Task task = Task::ASR;
  seqio::Language language = seqio::Language::KO;
  std::string text;
};

constexpr const char* kManifestHeader = "smoe-manifest v1";

std::string format_manifest(const std::vector<ManifestRecord>& records);
// FormatError with the line number on malformed input.
std::vector<ManifestRecord> parse_manifest(const std::string& text);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

// Writes WAVs, per-item target text files and manifest.tsv under `dir`.
std::vector<ManifestRecord> write_synthetic_corpus(const SyntheticTaskSpec& spec,
                                                   const std::vector<SyntheticItem>& items,
                                                   const std::filesystem::path& dir);

// Reads every referenced WAV once and extracts features.
Dataset load_manifest_dataset(const std::filesystem::path& manifest, const seqio::Vocabulary& vocab);

}  // namespace smoe::train

#pragma once

#include <cstdint>
#include <filesystem>

#include "smoe/model/model.hpp"

namespace smoe::model {

constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
  Model model;
  std::uint64_t step = 0;
};

// Little-endian layout: "SMOE", u32 version, u32 length + config text,
// u64 training step, u32 entry count, then per entry u32 length + name,
// u32 rank, u64 dims, float64 data.
void save_checkpoint(Model& model, std::uint64_t step, const std::filesystem::path& path);
// Verifies magic, version and every entry's name and shape against the model
// the embedded config describes. Throws IoError if the file cannot be opened
// and FormatError (naming the entry) on any inconsistency.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace smoe::model

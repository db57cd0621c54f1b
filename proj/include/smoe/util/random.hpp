#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace smoe {

using Rng = std::mt19937_64;

// Expands a root seed into an independent stream per purpose ("data",
// "init", "dropout", "shuffle", ...), so each subsystem can be replayed alone.
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose);

inline Rng make_rng(std::uint64_t root, std::string_view purpose) {
  return Rng(derive_seed(root, purpose));
}

}  // namespace smoe

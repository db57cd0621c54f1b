#include "smoe/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe::model {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'M', 'O', 'E'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get(const std::string& what) {
    T v;
    take(&v, sizeof(T), what);
    return v;
  }
  void take(void* out, std::size_t n, const std::string& what) {
    if (n > bytes_.size() - pos_) throw FormatError(fmt::format("checkpoint truncated while reading {}", what));
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string get_string(const std::string& what) {
    const auto n = get<std::uint32_t>(what);
    std::string s(n, '\0');
    take(s.data(), n, what);
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(Model& model, std::uint64_t step, const std::filesystem::path& path) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put(kCheckpointVersion);
  w.put_string(model.config().to_text());
  w.put(step);
  const auto params = model.named_params();
  w.put(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.put_string(name);
    w.put(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.put(static_cast<std::uint64_t>(d));
    w.put_bytes(t.data().data(), t.size() * sizeof(double));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open checkpoint {}", path.string()));
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  char magic[4];
  r.take(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(fmt::format("unsupported checkpoint version {} (expected {})", version, kCheckpointVersion));
  }
  ModelConfig config;
  try {
    config = ModelConfig::from_text(r.get_string("config"));
  } catch (const ConfigError& e) {
    throw FormatError(fmt::format("checkpoint config invalid: {}", e.what()));
  }
  const auto step = r.get<std::uint64_t>("step");
  const auto count = r.get<std::uint32_t>("entry count");

  Model model(config, 0);
  auto params = model.named_params();
  if (count != params.size()) {
    throw FormatError(fmt::format("checkpoint has {} entries, config implies {}", count, params.size()));
  }
  for (auto& [expected_name, t] : params) {
    const auto name = r.get_string("entry name");
    if (name != expected_name) {
      throw FormatError(fmt::format("entry `{}` found where `{}` was expected", name, expected_name));
    }
    const auto rank = r.get<std::uint32_t>(name);
    if (rank != t.rank()) throw FormatError(fmt::format("entry `{}`: rank {} != {}", name, rank, t.rank()));
    for (std::size_t i = 0; i < rank; ++i) {
      const auto dim = r.get<std::uint64_t>(name);
      if (dim != t.shape()[i]) {
        throw FormatError(fmt::format("entry `{}`: shape mismatch with config, expected {}", name,
                                      num::shape_string(t.shape())));
      }
    }
    r.take(t.mutable_data().data(), t.size() * sizeof(double), name);
  }
  if (!r.at_end()) throw FormatError("trailing bytes after the last checkpoint entry");
  return {std::move(model), step};
}

}  // namespace smoe::model

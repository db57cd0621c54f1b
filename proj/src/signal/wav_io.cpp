#include "smoe/signal/wav_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe::signal {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}
void put_u16(std::string& out, std::uint16_t v) {
  out += static_cast<char>(v & 0xff);
  out += static_cast<char>((v >> 8) & 0xff);
}
std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

void write_wav(const std::string& path, const Waveform& w) {
  (void)w.bandwidth();
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate * 2));
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : w.samples) {
    const auto q = static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 1.0) * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path);
}

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open audio file " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw InputError(path + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  int rate = 0;
  bool have_fmt = false;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = get_u32(chunk + 4);
    if (pos + 8 + len > bytes.size()) throw InputError(path + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw InputError(path + ": short fmt chunk");
      const auto format = get_u16(chunk + 8), channels = get_u16(chunk + 10);
      const auto bits = get_u16(chunk + 22);
      rate = static_cast<int>(get_u32(chunk + 12));
      if (format != 1 || channels != 1 || bits != 16) {
        throw InputError(fmt::format("{}: need 16-bit PCM mono (format {}, {} ch, {} bit)", path,
                                     format, channels, bits));
      }
      if (rate != kWideRate && rate != kNarrowRate) {
        throw InputError(fmt::format("{}: unsupported sample rate {}", path, rate));
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw InputError(path + ": data chunk before fmt chunk");
      Waveform w{std::vector<double>(len / 2), rate};
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(get_u16(chunk + 8 + 2 * i));
        w.samples[i] = raw / 32767.0;
      }
      return w;
    }
    pos += 8 + len + (len & 1);
  }
  throw InputError(path + ": no data chunk");
}

}  // namespace smoe::signal

#pragma once

#include <string>

#include "smoe/signal/waveform.hpp"

namespace smoe::signal {

// 16-bit PCM mono RIFF/WAVE, little-endian. Samples are clipped to [-1, 1].
void write_wav(const std::string& path, const Waveform& w);
// InputError on anything that is not a readable 16-bit mono 8/16 kHz file.
Waveform read_wav(const std::string& path);

}  // namespace smoe::signal

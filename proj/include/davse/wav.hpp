#pragma once

#include <string>

#include "davse/dsp.hpp"

namespace davse {

// RIFF/WAVE, PCM 16-bit little-endian, mono. Samples are scaled to [-1,1)
// by 1/32768 on read. Throws std::runtime_error naming the file on parse or
// I/O failure.
dsp::Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const dsp::Waveform& w);

}  // namespace davse

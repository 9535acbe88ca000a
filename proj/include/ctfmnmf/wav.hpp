#pragma once

#include "ctfmnmf/types.hpp"

#include <string>

namespace ctfmnmf {

enum class WavFormat { Pcm16, Float32 };

// Reads a multichannel RIFF WAV file. Supports 16-bit PCM and 32-bit float.
TimeSignal read_wav(const std::string& path);

// Writes all channels interleaved. Pcm16 clips to [-1, 1).
void write_wav(const std::string& path, const TimeSignal& signal,
               WavFormat format = WavFormat::Float32);

}  // namespace ctfmnmf

#include "ctfmnmf/wav.hpp"

#include "ctfmnmf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace ctfmnmf {

namespace {

template <typename T>
void write_le(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

}  // namespace

TimeSignal read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path);

  char tag[4];
  in.read(tag, 4);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw IoError(path + ": not a RIFF file");
  read_le<std::uint32_t>(in);  // riff size
  in.read(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw IoError(path + ": not a WAVE file");

  std::uint16_t format_code = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  std::vector<char> payload;
  bool have_fmt = false, have_data = false;
  while (in.read(tag, 4)) {
    const std::uint32_t chunk_size = read_le<std::uint32_t>(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format_code = read_le<std::uint16_t>(in);
      channels = read_le<std::uint16_t>(in);
      sample_rate = read_le<std::uint32_t>(in);
      read_le<std::uint32_t>(in);  // byte rate
      read_le<std::uint16_t>(in);  // block align
      bits = read_le<std::uint16_t>(in);
      if (chunk_size > 16) in.ignore(chunk_size - 16);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      payload.resize(chunk_size);
      in.read(payload.data(), chunk_size);
      have_data = true;
    } else {
      in.ignore(chunk_size + (chunk_size & 1));
    }
  }
  if (!have_fmt || !have_data)
    throw IoError(path + ": missing fmt or data chunk");
  if (channels == 0) throw IoError(path + ": zero channels");

  const bool pcm16 = format_code == 1 && bits == 16;
  const bool f32 = format_code == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw IoError(path + ": unsupported format (need 16-bit PCM or 32-bit float)");

  const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
  const std::int64_t total = static_cast<std::int64_t>(payload.size() / bytes_per_sample);
  const std::int64_t length = total / channels;

  TimeSignal signal;
  signal.sample_rate = static_cast<double>(sample_rate);
  signal.samples = Eigen::MatrixXd(length, channels);
  const char* p = payload.data();
  for (std::int64_t t = 0; t < length; ++t) {
    for (int c = 0; c < channels; ++c) {
      if (pcm16) {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        p += 2;
        signal.samples(t, c) = static_cast<double>(v) / 32768.0;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        p += 4;
        signal.samples(t, c) = static_cast<double>(v);
      }
    }
  }
  return signal;
}

void write_wav(const std::string& path, const TimeSignal& signal, WavFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create WAV file: " + path);

  const int channels = signal.channels();
  const std::int64_t length = signal.length();
  const std::uint16_t bits = format == WavFormat::Pcm16 ? 16 : 32;
  const std::uint16_t format_code = format == WavFormat::Pcm16 ? 1 : 3;
  const std::uint32_t byte_rate =
      static_cast<std::uint32_t>(signal.sample_rate) * channels * bits / 8;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(length * channels * bits / 8);

  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, format_code);
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(channels));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(signal.sample_rate));
  write_le<std::uint32_t>(out, byte_rate);
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(channels * bits / 8));
  write_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_size);

  for (std::int64_t t = 0; t < length; ++t) {
    for (int c = 0; c < channels; ++c) {
      const double x = signal.samples(t, c);
      if (format == WavFormat::Pcm16) {
        const double clipped = std::clamp(x, -1.0, 32767.0 / 32768.0);
        write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lrint(clipped * 32768.0)));
      } else {
        write_le<float>(out, static_cast<float>(x));
      }
    }
  }
  if (!out) throw IoError("short write: " + path);
}

}  // namespace ctfmnmf

#include "ctfmnmf/container.hpp"

#include "ctfmnmf/errors.hpp"

#include <cstring>
#include <fstream>

namespace ctfmnmf {

namespace {

constexpr char kSpecMagic[8] = {'C', 'T', 'F', 'S', 'P', 'G', '1', '\0'};
constexpr char kFiltMagic[8] = {'C', 'T', 'F', 'F', 'L', 'T', '1', '\0'};
constexpr char kNmfMagic[8] = {'C', 'T', 'F', 'N', 'M', 'F', '1', '\0'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

void put_complex(std::ostream& out, const Complex& z) {
  put<float>(out, static_cast<float>(z.real()));
  put<float>(out, static_cast<float>(z.imag()));
}

Complex get_complex(std::istream& in) {
  const float re = get<float>(in);
  const float im = get<float>(in);
  return {static_cast<double>(re), static_cast<double>(im)};
}

std::ofstream open_out(const std::string& path, const char* magic) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create file: " + path);
  out.write(magic, 8);
  return out;
}

std::ifstream open_in(const std::string& path, const char* magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  char header[8];
  in.read(header, 8);
  if (!in || std::memcmp(header, magic, 8) != 0)
    throw IoError(path + ": bad or mismatched container magic");
  return in;
}

}  // namespace

void write_spectrogram(const std::string& path, const Spectrogram& spec) {
  std::ofstream out = open_out(path, kSpecMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.bins));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.frames));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.channels));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.window_len));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.hop));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.sample_rate));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(spec.original_length));
  for (const Complex& z : spec.data) put_complex(out, z);
  if (!out) throw IoError("short write: " + path);
}

Spectrogram read_spectrogram(const std::string& path) {
  std::ifstream in = open_in(path, kSpecMagic);
  Spectrogram spec;
  const auto bins = get<std::uint32_t>(in);
  const auto frames = get<std::uint32_t>(in);
  const auto channels = get<std::uint32_t>(in);
  spec.window_len = static_cast<int>(get<std::uint32_t>(in));
  spec.hop = static_cast<int>(get<std::uint32_t>(in));
  spec.sample_rate = static_cast<double>(get<std::uint32_t>(in));
  spec.original_length = static_cast<std::int64_t>(get<std::uint64_t>(in));
  spec.resize(static_cast<int>(bins), static_cast<int>(frames),
              static_cast<int>(channels));
  for (Complex& z : spec.data) z = get_complex(in);
  if (!in) throw IoError(path + ": truncated spectrogram container");
  return spec;
}

void write_filters(const std::string& path, const CtfFilters& filters) {
  std::ofstream out = open_out(path, kFiltMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(filters.num_channels()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(filters.taps_per_source.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(filters.num_bins()));
  for (int taps : filters.taps_per_source)
    put<std::uint32_t>(out, static_cast<std::uint32_t>(taps));
  for (const auto& h : filters.bins)
    for (int col = 0; col < h.cols(); ++col)
      for (int row = 0; row < h.rows(); ++row) put_complex(out, h(row, col));
  if (!out) throw IoError("short write: " + path);
}

CtfFilters read_filters(const std::string& path) {
  std::ifstream in = open_in(path, kFiltMagic);
  const auto channels = get<std::uint32_t>(in);
  const auto sources = get<std::uint32_t>(in);
  const auto bins = get<std::uint32_t>(in);
  CtfFilters filters;
  int total = 0;
  for (std::uint32_t n = 0; n < sources; ++n) {
    filters.taps_per_source.push_back(static_cast<int>(get<std::uint32_t>(in)));
    total += filters.taps_per_source.back();
  }
  filters.bins.resize(bins);
  for (auto& h : filters.bins) {
    h.resize(channels, total);
    for (int col = 0; col < h.cols(); ++col)
      for (int row = 0; row < h.rows(); ++row) h(row, col) = get_complex(in);
  }
  if (!in) throw IoError(path + ": truncated filter container");
  return filters;
}

void write_factors(const std::string& path, const NmfFactors& factors) {
  std::ofstream out = open_out(path, kNmfMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(factors.num_sources()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(factors.num_bins()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(factors.num_frames()));
  for (const auto& b : factors.bases)
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.cols()));
  put<double>(out, factors.floor);
  for (int n = 0; n < factors.num_sources(); ++n) {
    const auto& b = factors.bases[static_cast<size_t>(n)];
    const auto& v = factors.activations[static_cast<size_t>(n)];
    for (int i = 0; i < b.rows(); ++i)
      for (int k = 0; k < b.cols(); ++k) put<double>(out, b(i, k));
    for (int k = 0; k < v.rows(); ++k)
      for (int j = 0; j < v.cols(); ++j) put<double>(out, v(k, j));
  }
  if (!out) throw IoError("short write: " + path);
}

NmfFactors read_factors(const std::string& path) {
  std::ifstream in = open_in(path, kNmfMagic);
  const auto sources = get<std::uint32_t>(in);
  const auto bins = get<std::uint32_t>(in);
  const auto frames = get<std::uint32_t>(in);
  std::vector<int> bases_counts;
  for (std::uint32_t n = 0; n < sources; ++n)
    bases_counts.push_back(static_cast<int>(get<std::uint32_t>(in)));
  NmfFactors factors;
  factors.floor = get<double>(in);
  factors.bases.resize(sources);
  factors.activations.resize(sources);
  for (std::uint32_t n = 0; n < sources; ++n) {
    auto& b = factors.bases[n];
    auto& v = factors.activations[n];
    b.resize(bins, bases_counts[n]);
    v.resize(bases_counts[n], frames);
    for (int i = 0; i < b.rows(); ++i)
      for (int k = 0; k < b.cols(); ++k) b(i, k) = get<double>(in);
    for (int k = 0; k < v.rows(); ++k)
      for (int j = 0; j < v.cols(); ++j) v(k, j) = get<double>(in);
  }
  if (!in) throw IoError(path + ": truncated factor container");
  return factors;
}

}  // namespace ctfmnmf

#include "ctfmnmf/container.hpp"
#include "ctfmnmf/errors.hpp"
#include "ctfmnmf/wav.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

using namespace ctfmnmf;

namespace {
struct TempFile {
  explicit TempFile(std::string name) : path(std::move(name)) {}
  ~TempFile() { std::remove(path.c_str()); }
  std::string path;
};
}  // namespace

TEST_CASE("wav round trip") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uniform(-0.9, 0.9);
  TimeSignal signal;
  signal.sample_rate = 16000.0;
  signal.samples = Eigen::MatrixXd::NullaryExpr(300, 3, [&]() { return uniform(rng); });

  SUBCASE("float32 preserves samples to single precision") {
    TempFile f("roundtrip_f32.wav");
    write_wav(f.path, signal, WavFormat::Float32);
    const TimeSignal back = read_wav(f.path);
    REQUIRE(back.channels() == 3);
    REQUIRE(back.length() == 300);
    CHECK(back.sample_rate == 16000.0);
    CHECK((back.samples - signal.samples).cwiseAbs().maxCoeff() < 1e-7);
  }

  SUBCASE("pcm16 preserves samples to quantization accuracy") {
    TempFile f("roundtrip_i16.wav");
    write_wav(f.path, signal, WavFormat::Pcm16);
    const TimeSignal back = read_wav(f.path);
    CHECK((back.samples - signal.samples).cwiseAbs().maxCoeff() < 1.0 / 32768.0);
  }

  SUBCASE("unreadable and malformed files throw IoError") {
    CHECK_THROWS_AS(read_wav("nonexistent_file.wav"), IoError);
    TempFile f("not_a_wav.wav");
    std::ofstream(f.path) << "plainly not a wav";
    CHECK_THROWS_AS(read_wav(f.path), IoError);
  }
}

TEST_CASE("spectrogram container round trip") {
  Spectrogram spec;
  spec.resize(5, 7, 2);
  spec.window_len = 8;
  spec.hop = 2;
  spec.sample_rate = 16000.0;
  spec.original_length = 123;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  for (auto& z : spec.data) z = Complex(uniform(rng), uniform(rng));

  TempFile f("roundtrip.spec");
  write_spectrogram(f.path, spec);
  const Spectrogram back = read_spectrogram(f.path);
  CHECK(back.bins == 5);
  CHECK(back.frames == 7);
  CHECK(back.channels == 2);
  CHECK(back.window_len == 8);
  CHECK(back.hop == 2);
  CHECK(back.sample_rate == 16000.0);
  CHECK(back.original_length == 123);
  for (size_t k = 0; k < spec.data.size(); ++k)
    CHECK(std::abs(back.data[k] - spec.data[k]) < 1e-7);  // complex64 body

  SUBCASE("magic mismatch is rejected") {
    TempFile g("wrong_magic.spec");
    std::ofstream(g.path, std::ios::binary) << "CTFNMF1";
    CHECK_THROWS_AS(read_spectrogram(g.path), IoError);
  }
}

TEST_CASE("filter and factor containers round trip") {
  const CtfFilters filters = sample_ctf_filters(4, 2, {2, 2}, 0.5, 77, 3);
  TempFile f("roundtrip.ctf");
  write_filters(f.path, filters);
  const CtfFilters back = read_filters(f.path);
  CHECK(back.taps_per_source == filters.taps_per_source);
  REQUIRE(back.num_bins() == 3);
  for (int i = 0; i < 3; ++i)
    CHECK((back.bins[static_cast<size_t>(i)] - filters.bins[static_cast<size_t>(i)])
              .cwiseAbs()
              .maxCoeff() < 1e-7);

  std::mt19937_64 rng(5);
  const CtfConfig config = oracle::make_config(2, 4, {2, 2}, {3, 2});
  const NmfFactors factors = oracle::random_nmf(config, 4, 6, rng);
  TempFile g("roundtrip.nmf");
  write_factors(g.path, factors);
  const NmfFactors fback = read_factors(g.path);
  CHECK(fback.floor == factors.floor);
  REQUIRE(fback.num_sources() == 2);
  CHECK(fback.bases[0] == factors.bases[0]);       // f64 body is exact
  CHECK(fback.activations[1] == factors.activations[1]);
  CHECK(fback.bases[1].cols() == 2);
}

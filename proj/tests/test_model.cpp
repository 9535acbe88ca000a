#include "ctfmnmf/model.hpp"

#include "ctfmnmf/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <fstream>

using namespace ctfmnmf;

TEST_CASE("flatten_index maps (source, tap) blocks onto flat rows") {
  const CtfConfig config = oracle::make_config(2, 4, {2, 2}, {3, 3});

  CHECK(flatten_index(config, 0, 0) == 0);   // first block starts the stack
  CHECK(flatten_index(config, 1, 1) == 3);   // last row of the M=4, L_n=2 layout
  CHECK(flatten_index(config, 1, 0) == 2);

  SUBCASE("bijection round trip over every valid pair") {
    for (int n = 0; n < config.num_sources; ++n)
      for (int l = 0; l < config.taps_per_source[static_cast<size_t>(n)]; ++l) {
        const auto [n2, l2] = unflatten_index(config, flatten_index(config, n, l));
        CHECK(n2 == n);
        CHECK(l2 == l);
      }
  }

  SUBCASE("uneven tap split") {
    const CtfConfig uneven = oracle::make_config(2, 5, {3, 2}, {2, 2});
    CHECK(flatten_index(uneven, 1, 0) == 3);
    CHECK(unflatten_index(uneven, 4) == std::pair<int, int>{1, 1});
  }

  CHECK_THROWS_AS(flatten_index(config, 2, 0), ConfigError);
  CHECK_THROWS_AS(flatten_index(config, 0, 2), ConfigError);
  CHECK_THROWS_AS(unflatten_index(config, 4), ConfigError);
}

TEST_CASE("config validation rejects structural errors") {
  CtfConfig config = oracle::make_config(2, 4, {2, 2}, {3, 3});
  CHECK_NOTHROW(config.validate());

  SUBCASE("tap sum must equal channel count") {
    config.taps_per_source = {2, 3};
    CHECK_THROWS_AS(config.validate(), ConfigError);
  }
  SUBCASE("taps must be positive") {
    config.taps_per_source = {0, 4};
    CHECK_THROWS_AS(config.validate(), ConfigError);
  }
  SUBCASE("floor must be positive") {
    config.psd_floor = 0.0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
  }
  SUBCASE("bases must be listed per source") {
    config.bases_per_source = {3};
    CHECK_THROWS_AS(config.validate(), ConfigError);
  }
}

TEST_CASE("compute_psd") {
  SUBCASE("all-ones rank-1 factors give a flat unit PSD") {
    NmfFactors factors;
    factors.floor = 1e-12;
    factors.bases = {Eigen::MatrixXd::Ones(4, 1)};
    factors.activations = {Eigen::MatrixXd::Ones(1, 5)};
    const Eigen::MatrixXd lambda = compute_psd(factors, 0);
    CHECK((lambda.array() - 1.0).abs().maxCoeff() == 0.0);
  }

  SUBCASE("scale ambiguity: (cB, V/c) gives the same PSD") {
    std::mt19937_64 rng(3);
    const CtfConfig config = oracle::make_config(1, 1, {1}, {3});
    NmfFactors factors = oracle::random_nmf(config, 4, 5, rng);
    const Eigen::MatrixXd lambda = compute_psd(factors, 0);
    factors.bases[0] *= 7.5;
    factors.activations[0] /= 7.5;
    CHECK((compute_psd(factors, 0) - lambda).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("matches the explicit double loop") {
    std::mt19937_64 rng(4);
    const CtfConfig config = oracle::make_config(1, 1, {1}, {3});
    const NmfFactors factors = oracle::random_nmf(config, 4, 5, rng);
    const Eigen::MatrixXd got = compute_psd(factors, 0);
    const Eigen::MatrixXd want = oracle::psd(factors, 0);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-14);
  }

  SUBCASE("floor applies everywhere") {
    NmfFactors factors;
    factors.floor = 0.5;
    factors.bases = {Eigen::MatrixXd::Constant(2, 1, 0.1)};
    factors.activations = {Eigen::MatrixXd::Constant(1, 2, 0.1)};
    CHECK(compute_psd(factors, 0).minCoeff() == 0.5);
  }
}

TEST_CASE("delayed_psd clamps the frame index at the start") {
  Eigen::MatrixXd lambda(2, 5);
  lambda << 1, 2, 3, 4, 5, 10, 20, 30, 40, 50;
  CHECK(delayed_psd(lambda, 0, 3, 0) == 4.0);   // l = 0 is the frame itself
  CHECK(delayed_psd(lambda, 0, 0, 1) == 1.0);   // clamped to the first frame
  CHECK(delayed_psd(lambda, 1, 4, 2) == 30.0);  // plain shift
}

TEST_CASE("config file parsing with extras and overrides") {
  const std::string path = "test_config.tmp";
  {
    std::ofstream out(path);
    out << "# comment line\n"
        << "n_sources = 2\n"
        << "n_channels = 4\n"
        << "taps = 2,2\n"
        << "bases = 3,3\n"
        << "iters = 50\n"
        << "rule = ip\n"
        << "floor = 1e-9\n"
        << "seed = 42\n"
        << "window = 512   # pipeline-level key\n";
  }
  CtfConfig config;
  const auto extras = parse_config_file(path, config);
  CHECK(config.num_sources == 2);
  CHECK(config.taps_per_source == std::vector<int>{2, 2});
  CHECK(config.iterations == 50);
  CHECK(config.update_rule == UpdateRule::Ip);
  CHECK(config.psd_floor == 1e-9);
  CHECK(config.seed == 42);
  CHECK(extras.at("window") == "512");
  CHECK_NOTHROW(config.validate());
  std::remove(path.c_str());

  CHECK_THROWS_AS(parse_config_file("missing_file.cfg", config), IoError);
  CHECK_THROWS_AS(parse_update_rule("newton"), ConfigError);
}

TEST_CASE("random_factors is seed-deterministic and in range") {
  const CtfConfig config = oracle::make_config(2, 4, {2, 2}, {3, 2});
  std::mt19937_64 rng_a(9), rng_b(9);
  const NmfFactors a = random_factors(config, 6, 7, 1e-10, rng_a);
  const NmfFactors b = random_factors(config, 6, 7, 1e-10, rng_b);
  for (int n = 0; n < 2; ++n) {
    CHECK(a.bases[static_cast<size_t>(n)] == b.bases[static_cast<size_t>(n)]);
    CHECK(a.activations[static_cast<size_t>(n)] ==
          b.activations[static_cast<size_t>(n)]);
    CHECK(a.bases[static_cast<size_t>(n)].minCoeff() > 0.1);
    CHECK(a.bases[static_cast<size_t>(n)].maxCoeff() < 1.0);
  }
  CHECK(a.bases[1].cols() == 2);
}

TEST_CASE("spectrogram to per-bin matrices and back") {
  Spectrogram spec;
  spec.resize(3, 4, 2);
  spec.window_len = 4;
  spec.hop = 1;
  spec.sample_rate = 8000.0;
  spec.original_length = 10;
  int counter = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      for (int c = 0; c < 2; ++c)
        spec.at(i, j, c) = Complex(counter++, -counter);

  const MixtureSpectrogram mix = MixtureSpectrogram::from_spectrogram(spec);
  CHECK(mix.num_bins() == 3);
  CHECK(mix.num_channels() == 2);
  CHECK(mix.num_frames() == 4);
  CHECK(mix.bins[1](0, 2) == spec.at(1, 2, 0));

  const Spectrogram back = mix.to_spectrogram(spec);
  CHECK(back.data == spec.data);
  CHECK(back.window_len == spec.window_len);
  CHECK(back.original_length == spec.original_length);
}

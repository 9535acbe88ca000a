#include "ctfmnmf/wiener.hpp"

#include "ctfmnmf/errors.hpp"
#include "ctfmnmf/estimator.hpp"
#include "ctfmnmf/stft.hpp"
#include "ctfmnmf/synth.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

using namespace ctfmnmf;

TEST_CASE("wiener: a single source absorbs the whole mixture") {
  const CtfConfig config = oracle::make_config(1, 2, {2}, {2});
  std::mt19937_64 rng(3);
  const MixtureSpectrogram x = oracle::random_mixture(3, 2, 6, rng);
  const NmfFactors factors = oracle::random_nmf(config, 3, 6, rng);
  auto demixing = identity_demixing(config, 3);
  for (auto& w : demixing) w += 0.3 * oracle::random_complex(2, 2, rng);

  const auto images = reconstruct_images(demixing, factors, x, config);
  REQUIRE(images.size() == 1);
  for (int i = 0; i < 3; ++i)
    CHECK((images[0].bins[static_cast<size_t>(i)] - x.bins[static_cast<size_t>(i)]).norm() <
          1e-8 * x.bins[static_cast<size_t>(i)].norm());
}

TEST_CASE("wiener: a silent source gets a near-zero image") {
  // Mixture actually generated with source 2 silent, demixed by the true
  // inverse; the silent source's floored PSD must route essentially nothing
  // into its image.
  const CtfConfig config = oracle::make_config(2, 4, {2, 2}, {2, 2});
  const int num_bins = 2, frames = 8;
  NmfSources sources = sample_nmf_sources(num_bins, frames, 2, 2, 7);
  sources.spectrograms[1].setZero();
  const CtfFilters filters = sample_ctf_filters(4, 2, {2, 2}, 0.5, 9, num_bins);
  const CtfMixture mix = generate_ctf_mixture(sources.spectrograms, filters);

  NmfFactors factors = sources.factors;
  factors.floor = 1e-12;
  factors.bases[1].setConstant(1e-12);
  factors.activations[1].setConstant(1e-12);

  std::vector<Eigen::MatrixXcd> demixing;
  for (const auto& h : filters.bins) demixing.push_back(h.inverse());

  const auto images = reconstruct_images(demixing, factors, mix.mixture, config);
  for (int i = 0; i < num_bins; ++i) {
    const double scale = mix.mixture.bins[static_cast<size_t>(i)].norm();
    CHECK(images[1].bins[static_cast<size_t>(i)].norm() < 1e-6 * scale);
    CHECK((images[0].bins[static_cast<size_t>(i)] -
           mix.mixture.bins[static_cast<size_t>(i)]).norm() < 1e-6 * scale);
  }
}

TEST_CASE("wiener: images partition the mixture") {
  const CtfConfig config = oracle::make_config(2, 4, {2, 2}, {3, 3});
  std::mt19937_64 rng(11);
  const MixtureSpectrogram x = oracle::random_mixture(4, 4, 10, rng);
  const NmfFactors factors = oracle::random_nmf(config, 4, 10, rng);
  auto demixing = identity_demixing(config, 4);
  for (auto& w : demixing) w += 0.4 * oracle::random_complex(4, 4, rng);

  const auto images = reconstruct_images(demixing, factors, x, config);
  for (int i = 0; i < 4; ++i) {
    Eigen::MatrixXcd sum = images[0].bins[static_cast<size_t>(i)];
    sum += images[1].bins[static_cast<size_t>(i)];
    for (int j = 0; j < 10; ++j) {
      const double scale = x.bins[static_cast<size_t>(i)].col(j).norm();
      CHECK((sum.col(j) - x.bins[static_cast<size_t>(i)].col(j)).norm() <=
            1e-8 * scale);
    }
  }
}

TEST_CASE("wiener: gains have eigenvalues in the unit interval") {
  const CtfConfig config = oracle::make_config(2, 4, {2, 2}, {2, 2});
  std::mt19937_64 rng(13);
  const NmfFactors factors = oracle::random_nmf(config, 2, 6, rng);
  auto demixing = identity_demixing(config, 2);
  for (auto& w : demixing) w += 0.3 * oracle::random_complex(4, 4, rng);

  std::vector<Eigen::MatrixXd> lambdas;
  for (int n = 0; n < 2; ++n) lambdas.push_back(compute_psd(factors, n));

  for (int i = 0; i < 2; ++i) {
    const Eigen::MatrixXcd mixing = demixing[static_cast<size_t>(i)].inverse();
    for (int j = 0; j < 6; ++j) {
      Eigen::VectorXd stack(4);
      for (int r = 0; r < 4; ++r) {
        const auto [n, l] = unflatten_index(config, r);
        stack[r] = delayed_psd(lambdas[static_cast<size_t>(n)], i, j, l);
      }
      const Eigen::MatrixXcd full = mixing * stack.asDiagonal() * mixing.adjoint();
      for (int n = 0; n < 2; ++n) {
        const int r0 = config.row_offset(n);
        const Eigen::MatrixXcd part = mixing.middleCols(r0, 2) *
                                      stack.segment(r0, 2).asDiagonal() *
                                      mixing.middleCols(r0, 2).adjoint();
        const Eigen::MatrixXcd gain = part * full.inverse();
        const Eigen::VectorXcd eig = gain.eigenvalues();
        for (int k = 0; k < 4; ++k) {
          CHECK(std::abs(eig[k]) <= 1.0 + 1e-6);
          CHECK(eig[k].real() >= -1e-9);
        }
      }
    }
  }
}

TEST_CASE("image_to_signal delegates to the inverse transform") {
  // Build a genuine STFT so the inverse metadata is consistent.
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  TimeSignal signal;
  signal.sample_rate = 8000.0;
  signal.samples = Eigen::MatrixXd::NullaryExpr(700, 2, [&]() { return gauss(rng); });
  const Spectrogram spec = forward_stft(signal, 128, 32);
  const MixtureSpectrogram mix = MixtureSpectrogram::from_spectrogram(spec);

  SUBCASE("a full-mixture image reproduces the signal") {
    const TimeSignal out = image_to_signal(mix, spec);
    REQUIRE(out.length() == signal.length());
    CHECK((out.samples - signal.samples).cwiseAbs().maxCoeff() <
          1e-10 * signal.samples.cwiseAbs().maxCoeff());
  }

  SUBCASE("reference-channel extraction") {
    const TimeSignal out = image_to_signal(mix, spec, 1);
    REQUIRE(out.channels() == 1);
    CHECK((out.samples.col(0) - signal.samples.col(1)).cwiseAbs().maxCoeff() <
          1e-10);
    CHECK_THROWS_AS(image_to_signal(mix, spec, 5), ConfigError);
  }

  SUBCASE("zero image inverts to silence") {
    MixtureSpectrogram zero;
    zero.bins.assign(static_cast<size_t>(spec.bins),
                     Eigen::MatrixXcd::Zero(2, spec.frames));
    const TimeSignal out = image_to_signal(zero, spec);
    CHECK(out.samples.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("wiener pipeline on a converged synthetic separation") {
  CtfConfig config = oracle::make_config(2, 4, {2, 2}, {2, 2}, 19);
  config.iterations = 30;
  const NmfSources sources = sample_nmf_sources(6, 40, 2, 2, 61);
  const CtfFilters filters = sample_ctf_filters(4, 2, {2, 2}, 0.5, 67, 6);
  const CtfMixture mix = generate_ctf_mixture(sources.spectrograms, filters);

  const SeparationResult result = run(config, mix.mixture);
  const auto images =
      reconstruct_images(result.demixing, result.factors, mix.mixture, config);

  for (int i = 0; i < 6; ++i) {
    Eigen::MatrixXcd sum = images[0].bins[static_cast<size_t>(i)];
    sum += images[1].bins[static_cast<size_t>(i)];
    CHECK((sum - mix.mixture.bins[static_cast<size_t>(i)]).norm() <
          1e-8 * mix.mixture.bins[static_cast<size_t>(i)].norm());
  }
}

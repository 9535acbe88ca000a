#include "ctfmnmf/estimator.hpp"

#include "ctfmnmf/errors.hpp"
#include "ctfmnmf/synth.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace ctfmnmf;

namespace {

MixtureSpectrogram synthetic_ctf_mixture(int num_bins, int frames,
                                         const CtfConfig& config,
                                         std::uint64_t seed) {
  const NmfSources sources = sample_nmf_sources(
      num_bins, frames, config.num_sources,
      config.bases_per_source[0], seed);
  const CtfFilters filters =
      sample_ctf_filters(config.num_channels, config.num_sources,
                         config.taps_per_source, 0.5, seed + 1, num_bins);
  return generate_ctf_mixture(sources.spectrograms, filters).mixture;
}

bool non_increasing(const std::vector<double>& values, double rel_tol) {
  for (size_t t = 1; t < values.size(); ++t)
    if (values[t] > values[t - 1] + rel_tol * std::abs(values[t - 1])) return false;
  return true;
}

}  // namespace

TEST_CASE("run: objective trace is non-increasing for both rules") {
  CtfConfig config = oracle::make_config(2, 4, {2, 2}, {3, 3}, 11);
  config.iterations = 40;
  const MixtureSpectrogram x = synthetic_ctf_mixture(8, 40, config, 97);

  for (UpdateRule rule : {UpdateRule::Iss, UpdateRule::Ip}) {
    config.update_rule = rule;
    const SeparationResult result = run(config, x);
    REQUIRE(result.trace.objective.size() == 40);
    CHECK(non_increasing(result.trace.objective, 1e-6));
    CHECK(result.trace.objective.back() < result.trace.objective.front());
  }
}

TEST_CASE("run: per-step descent of the exact coordinate updates") {
  // The demixing sweep and both multiplicative updates are exact
  // minimization steps and must never increase the objective. The rescale
  // pulls rows away from the sweep's normalization and is not a descent step
  // of the full objective, so it is covered by the iteration-level trace
  // checks instead.
  CtfConfig config = oracle::make_config(2, 4, {2, 2}, {2, 2}, 3);
  const int num_bins = 6, frames = 30;
  const MixtureSpectrogram x = synthetic_ctf_mixture(num_bins, frames, config, 41);

  std::mt19937_64 rng(config.seed);
  const double floor_abs = 1e-10 * x.mean_power();
  NmfFactors factors = random_factors(config, num_bins, frames, floor_abs, rng);
  auto demixing = identity_demixing(config, num_bins);
  auto demixing_ip = demixing;

  double previous = objective(demixing, factors, x, config);
  double previous_ip = previous;
  const double scale = std::abs(previous);

  for (int iter = 0; iter < 6; ++iter) {
    std::vector<Eigen::MatrixXd> lambdas;
    for (int n = 0; n < 2; ++n) lambdas.push_back(compute_psd(factors, n));

    DelayedEstimates est = demix(demixing, x);
    for (int i = 0; i < num_bins; ++i)
      iss_sweep(demixing[static_cast<size_t>(i)], est.bins[static_cast<size_t>(i)],
                lambdas, config, i);
    double current = objective(demixing, factors, x, config);
    CHECK(current <= previous + 1e-6 * scale);
    previous = current;

    // every individual projection row update descends as well
    for (int i = 0; i < num_bins; ++i)
      for (int r = 0; r < 4; ++r) {
        const auto [n, l] = unflatten_index(config, r);
        const Eigen::MatrixXcd cov = compute_weighted_covariance(
            x, lambdas[static_cast<size_t>(n)], l, i);
        ip_update(demixing_ip[static_cast<size_t>(i)], cov, r);
        const double after_row = objective(demixing_ip, factors, x, config);
        CHECK(after_row <= previous_ip + 1e-6 * scale);
        previous_ip = after_row;
      }

    est = demix(demixing, x);
    for (int n = 0; n < 2; ++n) {
      mu_update_bases(factors, est, n, config);
      const double after_bases = objective(demixing, factors, x, config);
      CHECK(after_bases <= previous + 1e-6 * scale);
      previous = after_bases;
    }

    for (int n = 0; n < 2; ++n) {
      mu_update_activations(factors, est, n, config);
      const double after_activations = objective(demixing, factors, x, config);
      CHECK(after_activations <= previous + 1e-6 * scale);
      previous = after_activations;
    }

    rescale(demixing, factors, est, config);
    previous = objective(demixing, factors, x, config);
    previous_ip = previous;
    demixing_ip = demixing;
  }
}

TEST_CASE("run: validation hooks confirm the determinant and normalization identities") {
  CtfConfig config = oracle::make_config(2, 4, {2, 2}, {3, 3}, 5);
  config.iterations = 10;
  const MixtureSpectrogram x = synthetic_ctf_mixture(6, 30, config, 19);

  CheckOptions checks;
  checks.det_lemma = true;
  checks.normalization = true;

  config.update_rule = UpdateRule::Iss;
  const SeparationResult iss = run(config, x, checks);
  CHECK(iss.trace.checked_updates == 10 * 6 * 4);
  CHECK(iss.trace.max_det_lemma_error < 1e-10);
  CHECK(iss.trace.max_normalization_error < 1e-8);

  config.update_rule = UpdateRule::Ip;
  const SeparationResult ip = run(config, x, checks);
  CHECK(ip.trace.max_normalization_error < 1e-8);
}

TEST_CASE("run: ISS and IP converge to nearby objectives") {
  // Parity needs enough frames for the factor model to be well determined;
  // short traces make the joint optimization multi-modal and the two rules
  // can settle in different basins.
  CtfConfig config = oracle::make_config(2, 4, {2, 2}, {3, 3}, 7);
  config.iterations = 100;
  const MixtureSpectrogram x = synthetic_ctf_mixture(32, 300, config, 23);

  config.update_rule = UpdateRule::Iss;
  const double obj_iss = run(config, x).trace.objective.back();
  config.update_rule = UpdateRule::Ip;
  const double obj_ip = run(config, x).trace.objective.back();
  CHECK(std::abs(obj_iss - obj_ip) <=
        0.05 * std::max(std::abs(obj_iss), std::abs(obj_ip)));
}

TEST_CASE("run: single steering sweep reduces to the standard single-tap sweep") {
  // L_n = 1 and M = N = 2 collapses the model to plain low-rank source
  // variances; one sweep must match an independent single-tap implementation.
  CtfConfig config = oracle::make_config(2, 2, {1, 1}, {2, 2}, 13);
  std::mt19937_64 rng(71);
  const int num_bins = 3, frames = 20;
  const MixtureSpectrogram x = oracle::random_mixture(num_bins, 2, frames, rng);
  std::vector<Eigen::MatrixXd> lambdas;
  std::uniform_real_distribution<double> uniform(0.4, 1.6);
  for (int n = 0; n < 2; ++n)
    lambdas.push_back(Eigen::MatrixXd::NullaryExpr(num_bins, frames,
                                                   [&]() { return uniform(rng); }));

  for (int i = 0; i < num_bins; ++i) {
    Eigen::MatrixXcd w = Eigen::MatrixXcd::Identity(2, 2) +
                         0.4 * oracle::random_complex(2, 2, rng);
    Eigen::MatrixXcd w_ref = w;
    Eigen::MatrixXcd y = w * x.bins[static_cast<size_t>(i)];

    iss_sweep(w, y, lambdas, config, i);

    // Standalone single-tap steering sweep, written out longhand.
    Eigen::MatrixXcd y_ref = w_ref * x.bins[static_cast<size_t>(i)];
    for (int r = 0; r < 2; ++r) {
      Eigen::VectorXcd z(2);
      for (int p = 0; p < 2; ++p) {
        Complex num(0.0, 0.0);
        double den = 0.0;
        for (int j = 0; j < frames; ++j) {
          const double lam = lambdas[static_cast<size_t>(p)](i, j);
          num += y_ref(p, j) * std::conj(y_ref(r, j)) / lam;
          den += std::norm(y_ref(r, j)) / lam;
        }
        if (p == r) {
          z[p] = Complex(1.0 - std::sqrt(frames / den), 0.0);
        } else {
          z[p] = num / den;
        }
      }
      const Eigen::RowVectorXcd row_w = w_ref.row(r);
      const Eigen::RowVectorXcd row_y = y_ref.row(r);
      w_ref -= z * row_w;
      y_ref -= z * row_y;
    }

    CHECK((w - w_ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("run: deterministic under a fixed seed, threads do not change results") {
  CtfConfig config = oracle::make_config(2, 4, {2, 2}, {3, 3}, 77);
  config.iterations = 8;
  const MixtureSpectrogram x = synthetic_ctf_mixture(8, 25, config, 31);

  const SeparationResult a = run(config, x);
  const SeparationResult b = run(config, x);
  CHECK(a.trace.objective == b.trace.objective);
  for (int i = 0; i < 8; ++i)
    CHECK((a.demixing[static_cast<size_t>(i)] - b.demixing[static_cast<size_t>(i)]).norm() == 0.0);

  config.threads = 4;
  const SeparationResult c = run(config, x);
  for (size_t t = 0; t < a.trace.objective.size(); ++t)
    CHECK(std::abs(c.trace.objective[t] - a.trace.objective[t]) <=
          1e-9 * std::abs(a.trace.objective[t]));
}

TEST_CASE("run: configuration and degeneracy errors") {
  CtfConfig config = oracle::make_config(2, 4, {2, 2}, {3, 3});
  config.iterations = 2;

  SUBCASE("channel mismatch") {
    std::mt19937_64 rng(1);
    const MixtureSpectrogram x = oracle::random_mixture(4, 3, 10, rng);
    CHECK_THROWS_AS(run(config, x), ConfigError);
  }
  SUBCASE("zero mixture") {
    MixtureSpectrogram x;
    x.bins.assign(4, Eigen::MatrixXcd::Zero(4, 10));
    CHECK_THROWS_AS(run(config, x), ConfigError);
  }
  SUBCASE("bad tap split") {
    config.taps_per_source = {1, 2};
    std::mt19937_64 rng(1);
    const MixtureSpectrogram x = oracle::random_mixture(4, 4, 10, rng);
    CHECK_THROWS_AS(run(config, x), ConfigError);
  }
  SUBCASE("a NaN in the mixture is rejected, never propagated") {
    std::mt19937_64 rng(2);
    MixtureSpectrogram x = oracle::random_mixture(2, 4, 10, rng);
    x.bins[1](2, 3) = Complex(std::numeric_limits<double>::quiet_NaN(), 0.0);
    for (UpdateRule rule : {UpdateRule::Ip, UpdateRule::Iss}) {
      config.update_rule = rule;
      try {
        run(config, x);
        FAIL("expected a degeneracy error");
      } catch (const DegeneracyError& e) {
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
      }
    }
  }

  SUBCASE("a silent frequency bin aborts with iteration and bin context") {
    std::mt19937_64 rng(3);
    MixtureSpectrogram x = oracle::random_mixture(3, 4, 10, rng);
    x.bins[1].setZero();
    config.update_rule = UpdateRule::Iss;
    try {
      run(config, x);
      FAIL("expected a degeneracy error");
    } catch (const DegeneracyError& e) {
      CHECK(e.iteration == 1);
      CHECK(e.bin == 1);
      CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
  }
}

TEST_CASE("trace CSV layout") {
  OptimizationTrace trace;
  trace.objective = {10.0, 9.5};
  trace.demix_ms = {1.0, 1.1};
  trace.mu_ms = {0.5, 0.6};
  trace.rescale_ms = {0.1, 0.1};
  const std::string csv = trace.to_csv();
  CHECK(csv.rfind("iter,objective,t_demix_ms,t_mu_ms,t_rescale_ms\n", 0) == 0);
  CHECK(csv.find("\n1,10") != std::string::npos);
  CHECK(csv.find("\n2,9.5") != std::string::npos);
  CHECK(trace.total_demix_ms() == doctest::Approx(2.1));
}

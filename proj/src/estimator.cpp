#include "ctfmnmf/estimator.hpp"

#include "ctfmnmf/errors.hpp"
#include "ctfmnmf/threading.hpp"

#include <Eigen/LU>
#include <limits>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace ctfmnmf {

std::string OptimizationTrace::to_csv() const {
  std::ostringstream out;
  out << "iter,objective,t_demix_ms,t_mu_ms,t_rescale_ms\n";
  out.precision(12);
  for (size_t t = 0; t < objective.size(); ++t)
    out << (t + 1) << ',' << objective[t] << ',' << demix_ms[t] << ','
        << mu_ms[t] << ',' << rescale_ms[t] << '\n';
  return out.str();
}

double OptimizationTrace::total_demix_ms() const {
  double s = 0.0;
  for (double v : demix_ms) s += v;
  return s;
}
double OptimizationTrace::total_mu_ms() const {
  double s = 0.0;
  for (double v : mu_ms) s += v;
  return s;
}
double OptimizationTrace::total_rescale_ms() const {
  double s = 0.0;
  for (double v : rescale_ms) s += v;
  return s;
}

double log_abs_det(const Eigen::MatrixXcd& m) {
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
  double acc = 0.0;
  for (int i = 0; i < m.rows(); ++i) {
    const double mag = std::abs(lu.matrixLU()(i, i));
    if (!(mag > 0.0) || !std::isfinite(mag))
      throw DegeneracyError("singular demixing matrix (zero pivot)");
    acc += std::log(mag);
  }
  if (acc < std::log(1e-300))
    throw DegeneracyError("demixing determinant magnitude below 1e-300");
  return acc;
}

double objective_from_parts(const std::vector<Eigen::MatrixXcd>& demixing,
                            const std::vector<Eigen::MatrixXd>& lambdas,
                            const DelayedEstimates& estimates,
                            const CtfConfig& config) {
  const int num_bins = estimates.num_bins();
  const int frames = estimates.num_frames();
  const int rows = config.total_taps();

  double obj = 0.0;
  for (int i = 0; i < num_bins; ++i) {
    const Eigen::MatrixXcd& y = estimates.bins[static_cast<size_t>(i)];
    for (int r = 0; r < rows; ++r) {
      const auto [n, l] = unflatten_index(config, r);
      const Eigen::MatrixXd& lambda = lambdas[static_cast<size_t>(n)];
      for (int j = l; j < frames; ++j) {
        const double lam = lambda(i, j - l);
        obj += std::log(lam) + std::norm(y(r, j)) / lam;
      }
    }
    obj -= 2.0 * frames * log_abs_det(demixing[static_cast<size_t>(i)]);
  }
  return obj;
}

double objective(const std::vector<Eigen::MatrixXcd>& demixing,
                 const NmfFactors& factors, const MixtureSpectrogram& x,
                 const CtfConfig& config) {
  std::vector<Eigen::MatrixXd> lambdas(static_cast<size_t>(config.num_sources));
  for (int n = 0; n < config.num_sources; ++n)
    lambdas[static_cast<size_t>(n)] = compute_psd(factors, n);
  const DelayedEstimates estimates = demix(demixing, x);
  return objective_from_parts(demixing, lambdas, estimates, config);
}

Eigen::MatrixXcd compute_weighted_covariance(const MixtureSpectrogram& x,
                                             const Eigen::MatrixXd& lambda,
                                             int tap, int bin) {
  const Eigen::MatrixXcd& xi = x.bins[static_cast<size_t>(bin)];
  const int channels = static_cast<int>(xi.rows());
  const int frames = static_cast<int>(xi.cols());

  Eigen::MatrixXcd cov = Eigen::MatrixXcd::Zero(channels, channels);
  for (int j = tap; j < frames; ++j)
    cov.noalias() += xi.col(j) * xi.col(j).adjoint() / lambda(bin, j - tap);
  cov /= static_cast<double>(frames);
  return 0.5 * (cov + cov.adjoint().eval());
}

namespace {

void throw_singular_projection(int row) {
  throw DegeneracyError(
      "projection update: singular system after diagonal loading", -1, -1, row);
}

void write_normalized_row(Eigen::MatrixXcd& demixing_bin, int row,
                          const auto& solution, const auto& weighted) {
  const double norm2 = solution.dot(weighted).real();
  if (!(norm2 > 0.0) || !std::isfinite(norm2))
    throw DegeneracyError("projection update: nonpositive row power", -1, -1,
                          row);
  demixing_bin.row(row) = solution.adjoint() / std::sqrt(norm2);
}

// Small channel counts run on flat arrays end to end: form W Q, eliminate
// the augmented system with partial pivoting, back-substitute, normalize.
// The pivot ratio doubles as the singularity probe and adapts to per-row
// scale differences. Storage is column-major, matching Eigen.
template <int N>
void ip_update_small(Eigen::MatrixXcd& demixing_bin, const Eigen::MatrixXcd& cov,
                     int row) {
  const Complex* w = demixing_bin.data();
  Complex solution[N];

  auto attempt = [&](const Complex* q) {
    Complex a[N][N + 1];
    double column_norm[N];  // |a[r][c]|^2 of the active column, kept fused
    for (int j = 0; j < N; ++j) {
      for (int i = 0; i < N; ++i) {
        Complex acc(0.0, 0.0);
        for (int l = 0; l < N; ++l) acc += w[l * N + i] * q[j * N + l];
        a[i][j] = acc;
        if (j == 0) column_norm[i] = std::norm(acc);
      }
    }
    for (int i = 0; i < N; ++i) a[i][N] = Complex(0.0, 0.0);
    a[row][N] = Complex(1.0, 0.0);

    double pivot_norm[N];
    double min_pivot = std::numeric_limits<double>::infinity();
    double max_pivot = 0.0;
    for (int c = 0; c < N; ++c) {
      int pivot_row = c;
      double best = column_norm[c];
      for (int r = c + 1; r < N; ++r)
        if (column_norm[r] > best) {
          best = column_norm[r];
          pivot_row = r;
        }
      if (pivot_row != c)
        for (int j = c; j <= N; ++j) std::swap(a[c][j], a[pivot_row][j]);
      if (!(best > 0.0)) return false;
      pivot_norm[c] = best;
      min_pivot = std::min(min_pivot, best);
      max_pivot = std::max(max_pivot, best);
      // 1/z as conj(z)/|z|^2, reusing the pivot norm; the next column's
      // magnitudes fall out of the same update pass
      const Complex inv = std::conj(a[c][c]) * (1.0 / best);
      for (int r = c + 1; r < N; ++r) {
        const Complex factor = a[r][c] * inv;
        for (int j = c + 1; j <= N; ++j) a[r][j] -= factor * a[c][j];
        column_norm[r] = std::norm(a[r][c + 1]);
      }
    }
    // squared-magnitude pivots, so the ratio threshold is squared as well
    if (!(min_pivot > 1e-26 * max_pivot)) return false;

    for (int r = N - 1; r >= 0; --r) {
      Complex acc = a[r][N];
      for (int j = r + 1; j < N; ++j) acc -= a[r][j] * solution[j];
      solution[r] = acc * std::conj(a[r][r]) * (1.0 / pivot_norm[r]);
    }
    for (int i = 0; i < N; ++i)
      if (!std::isfinite(solution[i].real()) || !std::isfinite(solution[i].imag()))
        return false;
    return true;
  };

  Complex loaded[N * N];
  const Complex* q = cov.data();
  if (!attempt(q)) {
    double trace = 0.0;
    for (int i = 0; i < N; ++i) trace += q[i * N + i].real();
    const double load = 1e-10 * trace / N;
    for (int k = 0; k < N * N; ++k) loaded[k] = q[k];
    for (int i = 0; i < N; ++i) loaded[i * N + i] += load;
    if (!attempt(loaded)) throw_singular_projection(row);
  }

  // scale against the unloaded covariance: loading only stabilizes the
  // direction solve, the normalization must use the true quadratic form
  double norm2 = 0.0;
  for (int i = 0; i < N; ++i) {
    Complex weighted(0.0, 0.0);
    for (int j = 0; j < N; ++j) weighted += q[j * N + i] * solution[j];
    norm2 += (std::conj(solution[i]) * weighted).real();
  }
  if (!(norm2 > 0.0) || !std::isfinite(norm2))
    throw DegeneracyError("projection update: nonpositive row power", -1, -1,
                          row);
  const double inv_scale = 1.0 / std::sqrt(norm2);
  for (int c = 0; c < N; ++c)
    demixing_bin(row, c) = std::conj(solution[c]) * inv_scale;
}

// General path: LU with per-thread scratch so the hot loop stays off the
// allocator. Effective singularity is detected from the pivot ratio.
struct IpWorkspace {
  Eigen::MatrixXcd system;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu;
  Eigen::VectorXcd rhs;
  Eigen::VectorXcd solution;
  Eigen::VectorXcd weighted;
};

void ip_update_general(Eigen::MatrixXcd& demixing_bin,
                       const Eigen::MatrixXcd& cov, int row) {
  const int m = static_cast<int>(cov.rows());
  thread_local IpWorkspace ws;
  if (ws.system.rows() != m) {
    ws.system.resize(m, m);
    ws.rhs.resize(m);
    ws.solution.resize(m);
    ws.weighted.resize(m);
  }

  auto attempt = [&](const Eigen::MatrixXcd& q) {
    ws.system.noalias() = demixing_bin * q;
    ws.lu.compute(ws.system);
    double min_pivot = std::numeric_limits<double>::infinity();
    double max_pivot = 0.0;
    for (int i = 0; i < m; ++i) {
      const double pivot = std::abs(ws.lu.matrixLU()(i, i));
      min_pivot = std::min(min_pivot, pivot);
      max_pivot = std::max(max_pivot, pivot);
    }
    if (!(min_pivot > 1e-13 * max_pivot)) return false;
    ws.rhs.setZero();
    ws.rhs[row] = Complex(1.0, 0.0);
    ws.solution.noalias() = ws.lu.solve(ws.rhs);
    return ws.solution.allFinite();
  };

  if (!attempt(cov)) {
    const double load = 1e-10 * cov.trace().real() / m;
    const Eigen::MatrixXcd loaded =
        cov + load * Eigen::MatrixXcd::Identity(m, m);
    if (!attempt(loaded)) throw_singular_projection(row);
  }
  // scale against the unloaded covariance (loading only stabilizes the solve)
  ws.weighted.noalias() = cov * ws.solution;
  write_normalized_row(demixing_bin, row, ws.solution, ws.weighted);
}

}  // namespace

void ip_update(Eigen::MatrixXcd& demixing_bin, const Eigen::MatrixXcd& cov,
               int row) {
  switch (cov.rows()) {
    case 2:
      return ip_update_small<2>(demixing_bin, cov, row);
    case 3:
      return ip_update_small<3>(demixing_bin, cov, row);
    case 4:
      return ip_update_small<4>(demixing_bin, cov, row);
    default:
      return ip_update_general(demixing_bin, cov, row);
  }
}

Eigen::VectorXcd iss_compute_z(const Eigen::MatrixXcd& demixing_bin,
                               const std::vector<Eigen::MatrixXcd>& covs,
                               int row) {
  const int rows = static_cast<int>(demixing_bin.rows());
  const Eigen::VectorXcd w_r = demixing_bin.row(row).adjoint();
  Eigen::VectorXcd z(rows);
  for (int p = 0; p < rows; ++p) {
    const Eigen::VectorXcd cov_w_r = covs[static_cast<size_t>(p)] * w_r;
    const double denom = w_r.dot(cov_w_r).real();
    if (!(denom > 0.0) || !std::isfinite(denom))
      throw DegeneracyError("steering update: nonpositive denominator for rows (" +
                                std::to_string(row) + ", " + std::to_string(p) + ")",
                            -1, -1, row);
    if (p == row) {
      z[p] = Complex(1.0 - 1.0 / std::sqrt(denom), 0.0);
    } else {
      const Eigen::VectorXcd w_p = demixing_bin.row(p).adjoint();
      z[p] = w_p.dot(cov_w_r) / denom;
    }
  }
  return z;
}

void iss_apply(Eigen::MatrixXcd& demixing_bin, const Eigen::VectorXcd& z,
               int row) {
  const Eigen::RowVectorXcd pre_row = demixing_bin.row(row);
  demixing_bin.noalias() -= z * pre_row;
}

DelayedEstimates demix(const std::vector<Eigen::MatrixXcd>& demixing,
                       const MixtureSpectrogram& x) {
  DelayedEstimates estimates;
  estimates.bins.resize(x.bins.size());
  for (size_t i = 0; i < x.bins.size(); ++i)
    estimates.bins[i].noalias() = demixing[i] * x.bins[i];
  return estimates;
}

void mu_update_bases(NmfFactors& factors, const DelayedEstimates& estimates,
                     int source, const CtfConfig& config) {
  const Eigen::MatrixXd lambda = compute_psd(factors, source);
  const int num_bins = estimates.num_bins();
  const int frames = estimates.num_frames();
  const int taps = config.taps_per_source[static_cast<size_t>(source)];
  const int row0 = config.row_offset(source);

  // energy(i, tau) = sum_l |y_{n,i,tau+l,l}|^2 over taps that stay in range;
  // count(tau) = number of such taps.
  Eigen::MatrixXd energy = Eigen::MatrixXd::Zero(num_bins, frames);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(frames);
  for (int l = 0; l < taps; ++l)
    for (int tau = 0; tau + l < frames; ++tau) count[tau] += 1.0;
  for (int i = 0; i < num_bins; ++i) {
    const Eigen::MatrixXcd& y = estimates.bins[static_cast<size_t>(i)];
    for (int l = 0; l < taps; ++l)
      for (int tau = 0; tau + l < frames; ++tau)
        energy(i, tau) += std::norm(y(row0 + l, tau + l));
  }

  const Eigen::MatrixXd inv_lambda = lambda.cwiseInverse();
  const Eigen::MatrixXd& activations = factors.activations[static_cast<size_t>(source)];
  const Eigen::MatrixXd numer =
      (energy.array() * inv_lambda.array().square()).matrix() * activations.transpose();
  const Eigen::MatrixXd denom =
      (inv_lambda.array().rowwise() * count.transpose().array()).matrix() *
      activations.transpose();

  Eigen::MatrixXd& bases = factors.bases[static_cast<size_t>(source)];
  bases = (bases.array() * (numer.array() / denom.array()).sqrt())
              .max(factors.floor)
              .matrix();
}

void mu_update_activations(NmfFactors& factors, const DelayedEstimates& estimates,
                           int source, const CtfConfig& config) {
  const Eigen::MatrixXd lambda = compute_psd(factors, source);
  const int num_bins = estimates.num_bins();
  const int frames = estimates.num_frames();
  const int taps = config.taps_per_source[static_cast<size_t>(source)];
  const int row0 = config.row_offset(source);

  // Mirror of the basis update: every tap that lands on frame tau
  // contributes, so the update is the exact minimizer of the majorized
  // objective and never increases it.
  Eigen::MatrixXd energy = Eigen::MatrixXd::Zero(num_bins, frames);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(frames);
  for (int l = 0; l < taps; ++l)
    for (int tau = 0; tau + l < frames; ++tau) count[tau] += 1.0;
  for (int i = 0; i < num_bins; ++i) {
    const Eigen::MatrixXcd& y = estimates.bins[static_cast<size_t>(i)];
    for (int l = 0; l < taps; ++l)
      for (int tau = 0; tau + l < frames; ++tau)
        energy(i, tau) += std::norm(y(row0 + l, tau + l));
  }

  const Eigen::MatrixXd inv_lambda = lambda.cwiseInverse();
  const Eigen::MatrixXd& bases = factors.bases[static_cast<size_t>(source)];
  const Eigen::MatrixXd numer =
      bases.transpose() * (energy.array() * inv_lambda.array().square()).matrix();
  const Eigen::MatrixXd denom =
      bases.transpose() *
      (inv_lambda.array().rowwise() * count.transpose().array()).matrix();

  Eigen::MatrixXd& activations = factors.activations[static_cast<size_t>(source)];
  activations = (activations.array() * (numer.array() / denom.array()).sqrt())
                    .max(factors.floor)
                    .matrix();
}

void rescale(std::vector<Eigen::MatrixXcd>& demixing, NmfFactors& factors,
             DelayedEstimates& estimates, const CtfConfig& config) {
  const int num_bins = estimates.num_bins();
  const int frames = estimates.num_frames();
  const int rows = config.total_taps();
  if (num_bins == 0 || frames == 0) return;

  Eigen::VectorXd mu(rows);
  for (int r = 0; r < rows; ++r) {
    double power = 0.0;
    for (int i = 0; i < num_bins; ++i)
      power += estimates.bins[static_cast<size_t>(i)].row(r).squaredNorm();
    mu[r] = std::sqrt(power / (static_cast<double>(num_bins) * frames));
  }

  for (int r = 0; r < rows; ++r) {
    if (mu[r] == 0.0) continue;  // silent row, leave untouched
    for (int i = 0; i < num_bins; ++i) {
      demixing[static_cast<size_t>(i)].row(r) /= mu[r];
      estimates.bins[static_cast<size_t>(i)].row(r) /= mu[r];
    }
  }
  for (int n = 0; n < config.num_sources; ++n) {
    const double mu0 = mu[config.row_offset(n)];
    if (mu0 == 0.0) continue;
    Eigen::MatrixXd& bases = factors.bases[static_cast<size_t>(n)];
    bases = (bases / (mu0 * mu0)).cwiseMax(factors.floor);
  }
}

namespace {

struct RowMap {
  std::vector<int> source;
  std::vector<int> tap;
};

RowMap build_row_map(const CtfConfig& config) {
  RowMap map;
  for (int r = 0; r < config.total_taps(); ++r) {
    const auto [n, l] = unflatten_index(config, r);
    map.source.push_back(n);
    map.tap.push_back(l);
  }
  return map;
}

// Steering vector computed from the running estimates; algebraically equal to
// iss_compute_z with covariances built from the current lambda, but O(L J)
// instead of O(L M^2) per coordinate.
Eigen::VectorXcd iss_steering_from_estimates(
    const Eigen::MatrixXcd& y, const std::vector<Eigen::MatrixXd>& lambdas,
    const RowMap& rows, int bin, int row) {
  const int num_rows = static_cast<int>(y.rows());
  const int frames = static_cast<int>(y.cols());
  Eigen::VectorXcd z(num_rows);
  for (int p = 0; p < num_rows; ++p) {
    const Eigen::MatrixXd& lambda = lambdas[static_cast<size_t>(rows.source[static_cast<size_t>(p)])];
    const int l = rows.tap[static_cast<size_t>(p)];
    Complex numer(0.0, 0.0);
    double denom = 0.0;
    for (int j = l; j < frames; ++j) {
      const double weight = 1.0 / lambda(bin, j - l);
      const Complex y_r = y(row, j);
      denom += std::norm(y_r) * weight;
      if (p != row) numer += y(p, j) * std::conj(y_r) * weight;
    }
    if (!(denom > 0.0) || !std::isfinite(denom))
      throw DegeneracyError("steering update: nonpositive denominator for rows (" +
                                std::to_string(row) + ", " + std::to_string(p) + ")",
                            -1, bin, row);
    if (p == row) {
      z[p] = Complex(1.0 - std::sqrt(static_cast<double>(frames) / denom), 0.0);
    } else {
      z[p] = numer / denom;
    }
  }
  return z;
}

double steering_row_power(const Eigen::MatrixXcd& y,
                          const Eigen::MatrixXd& lambda, int bin, int row,
                          int tap) {
  const int frames = static_cast<int>(y.cols());
  double q = 0.0;
  for (int j = tap; j < frames; ++j)
    q += std::norm(y(row, j)) / lambda(bin, j - tap);
  return q / frames;
}

// Applies step `row` of a steering sweep to W and the running estimates.
// Returns z so callers can instrument the determinant identity.
Eigen::VectorXcd iss_step(Eigen::MatrixXcd& w, Eigen::MatrixXcd& y,
                          const std::vector<Eigen::MatrixXd>& lambdas,
                          const RowMap& rows, int bin, int row) {
  const Eigen::VectorXcd z = iss_steering_from_estimates(y, lambdas, rows, bin, row);
  const Eigen::RowVectorXcd pre_row_y = y.row(row);
  iss_apply(w, z, row);
  y.noalias() -= z * pre_row_y;
  return z;
}

double wall_ms(std::chrono::steady_clock::time_point t0,
               std::chrono::steady_clock::time_point t1) {
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

void check_all_finite(const std::vector<Eigen::MatrixXcd>& demixing,
                      const DelayedEstimates& estimates, int iteration) {
  for (size_t i = 0; i < demixing.size(); ++i) {
    if (!demixing[i].allFinite())
      throw DegeneracyError("non-finite demixing matrix", iteration,
                            static_cast<int>(i));
    if (!estimates.bins[i].allFinite())
      throw DegeneracyError("non-finite source estimates", iteration,
                            static_cast<int>(i));
  }
}

}  // namespace

void iss_sweep(Eigen::MatrixXcd& demixing_bin, Eigen::MatrixXcd& estimates_bin,
               const std::vector<Eigen::MatrixXd>& lambdas,
               const CtfConfig& config, int bin) {
  const RowMap rows = build_row_map(config);
  for (int r = 0; r < config.total_taps(); ++r)
    iss_step(demixing_bin, estimates_bin, lambdas, rows, bin, r);
}

SeparationResult run(const CtfConfig& config, const MixtureSpectrogram& x,
                     const CheckOptions& checks) {
  config.validate();
  if (x.num_channels() != config.num_channels)
    throw ConfigError("mixture has " + std::to_string(x.num_channels()) +
                      " channels but config expects " +
                      std::to_string(config.num_channels));
  const double mean_power = x.mean_power();
  if (!std::isfinite(mean_power))
    throw DegeneracyError("mixture spectrogram contains non-finite values");
  if (!(mean_power > 0.0))
    throw ConfigError("mixture spectrogram is identically zero");

  const int num_bins = x.num_bins();
  const int frames = x.num_frames();
  const int rows = config.total_taps();
  const double floor_abs = config.psd_floor * mean_power;
  const RowMap row_map = build_row_map(config);

  std::mt19937_64 rng(config.seed);
  NmfFactors factors = random_factors(config, num_bins, frames, floor_abs, rng);
  std::vector<Eigen::MatrixXcd> demixing = identity_demixing(config, num_bins);

  std::vector<Eigen::MatrixXd> lambdas(static_cast<size_t>(config.num_sources));
  auto refresh_psd = [&]() {
    for (int n = 0; n < config.num_sources; ++n)
      lambdas[static_cast<size_t>(n)] = compute_psd(factors, n);
  };
  refresh_psd();

  OptimizationTrace trace;
  DelayedEstimates estimates;
  std::vector<double> bin_det_err(static_cast<size_t>(num_bins));
  std::vector<double> bin_norm_err(static_cast<size_t>(num_bins));

  for (int iter = 0; iter < config.iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    std::fill(bin_det_err.begin(), bin_det_err.end(), 0.0);
    std::fill(bin_norm_err.begin(), bin_norm_err.end(), 0.0);

    try {
      if (config.update_rule == UpdateRule::Iss) {
        estimates = demix(demixing, x);
        parallel_for(0, num_bins, config.threads, [&](int i) {
          Eigen::MatrixXcd& w = demixing[static_cast<size_t>(i)];
          Eigen::MatrixXcd& y = estimates.bins[static_cast<size_t>(i)];
          for (int r = 0; r < rows; ++r) {
            Complex det_before(0.0, 0.0);
            if (checks.det_lemma) det_before = w.determinant();
            const Eigen::VectorXcd z = iss_step(w, y, lambdas, row_map, i, r);
            if (checks.det_lemma) {
              const Complex det_after = w.determinant();
              const Complex predicted = det_before * (1.0 - z[r]);
              const double scale = std::max(std::abs(det_after), 1e-300);
              bin_det_err[static_cast<size_t>(i)] =
                  std::max(bin_det_err[static_cast<size_t>(i)],
                           std::abs(det_after - predicted) / scale);
            }
            if (checks.normalization) {
              const double q = steering_row_power(
                  y, lambdas[static_cast<size_t>(row_map.source[static_cast<size_t>(r)])], i, r,
                  row_map.tap[static_cast<size_t>(r)]);
              bin_norm_err[static_cast<size_t>(i)] =
                  std::max(bin_norm_err[static_cast<size_t>(i)], std::abs(q - 1.0));
            }
          }
        });
      } else {
        parallel_for(0, num_bins, config.threads, [&](int i) {
          Eigen::MatrixXcd& w = demixing[static_cast<size_t>(i)];
          const Eigen::MatrixXcd& xi = x.bins[static_cast<size_t>(i)];
          for (int r = 0; r < rows; ++r) {
            const Eigen::MatrixXd& lambda =
                lambdas[static_cast<size_t>(row_map.source[static_cast<size_t>(r)])];
            const int tap = row_map.tap[static_cast<size_t>(r)];
            const Eigen::MatrixXcd cov =
                compute_weighted_covariance(x, lambda, tap, i);
            ip_update(w, cov, r);
            // Refine the row scale through the frame sum: the matrix
            // quadratic form cancels catastrophically for rows near the
            // covariance null space, the frame sum is all positive terms.
            Eigen::MatrixXcd row_estimates = w.row(r) * xi;
            const double power = steering_row_power(row_estimates, lambda, i, 0, tap);
            if (power > 0.0 && std::isfinite(power))
              w.row(r) /= std::sqrt(power);
            if (checks.normalization) {
              row_estimates = w.row(r) * xi;
              const double q = steering_row_power(row_estimates, lambda, i, 0, tap);
              bin_norm_err[static_cast<size_t>(i)] =
                  std::max(bin_norm_err[static_cast<size_t>(i)], std::abs(q - 1.0));
            }
          }
        });
      }
      estimates = demix(demixing, x);
    } catch (const DegeneracyError& e) {
      throw DegeneracyError(std::string(e.what()) + " (iteration " +
                                std::to_string(iter + 1) + ")",
                            iter + 1, e.bin, e.row);
    }

    if (checks.det_lemma || checks.normalization) {
      for (int i = 0; i < num_bins; ++i) {
        trace.max_det_lemma_error =
            std::max(trace.max_det_lemma_error, bin_det_err[static_cast<size_t>(i)]);
        trace.max_normalization_error =
            std::max(trace.max_normalization_error, bin_norm_err[static_cast<size_t>(i)]);
      }
      trace.checked_updates += static_cast<std::int64_t>(num_bins) * rows;
    }

    const auto t1 = std::chrono::steady_clock::now();

    for (int n = 0; n < config.num_sources; ++n)
      mu_update_bases(factors, estimates, n, config);
    for (int n = 0; n < config.num_sources; ++n)
      mu_update_activations(factors, estimates, n, config);

    const auto t2 = std::chrono::steady_clock::now();

    rescale(demixing, factors, estimates, config);
    refresh_psd();

    const auto t3 = std::chrono::steady_clock::now();

    check_all_finite(demixing, estimates, iter + 1);
    double obj;
    try {
      obj = objective_from_parts(demixing, lambdas, estimates, config);
    } catch (const DegeneracyError& e) {
      throw DegeneracyError(std::string(e.what()) + " (iteration " +
                                std::to_string(iter + 1) + ")",
                            iter + 1, e.bin, e.row);
    }
    if (!std::isfinite(obj))
      throw DegeneracyError("non-finite objective", iter + 1);

    trace.objective.push_back(obj);
    trace.demix_ms.push_back(wall_ms(t0, t1));
    trace.mu_ms.push_back(wall_ms(t1, t2));
    trace.rescale_ms.push_back(wall_ms(t2, t3));
  }

  return {std::move(demixing), std::move(factors), std::move(trace)};
}

}  // namespace ctfmnmf

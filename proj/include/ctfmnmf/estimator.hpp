// Block-coordinate optimization of the CTF demixing objective: demixing-row
// updates (iterative projection or iterative source steering), multiplicative
// NMF updates, and per-row rescaling.

#pragma once

#include "ctfmnmf/model.hpp"

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace ctfmnmf {

// Delayed source estimates y[n][i][j][l], stored as one L x J matrix per bin
// with rows in flatten_index order. Always recomputable as W_i * x_i.
struct DelayedEstimates {
  std::vector<Eigen::MatrixXcd> bins;

  int num_bins() const { return static_cast<int>(bins.size()); }
  int num_rows() const { return bins.empty() ? 0 : static_cast<int>(bins[0].rows()); }
  int num_frames() const { return bins.empty() ? 0 : static_cast<int>(bins[0].cols()); }
};

struct OptimizationTrace {
  std::vector<double> objective;
  std::vector<double> demix_ms;
  std::vector<double> mu_ms;
  std::vector<double> rescale_ms;

  // Populated when the corresponding CheckOptions flag is set.
  double max_det_lemma_error = 0.0;
  double max_normalization_error = 0.0;
  std::int64_t checked_updates = 0;

  std::string to_csv() const;
  double total_demix_ms() const;
  double total_mu_ms() const;
  double total_rescale_ms() const;
};

// Optional per-update validation instrumentation. Both checks are exact
// recomputations and slow the run down; they are meant for verification, not
// production separation.
struct CheckOptions {
  bool det_lemma = false;      // det(W - z w_r^H) == det(W) (1 - z_r)
  bool normalization = false;  // w_r^H Q_r w_r == 1 after each row update
};

struct SeparationResult {
  std::vector<Eigen::MatrixXcd> demixing;
  NmfFactors factors;
  OptimizationTrace trace;
};

// log |det m| via LU with log-magnitude accumulation. Throws DegeneracyError
// when the determinant magnitude falls below 1e-300.
double log_abs_det(const Eigen::MatrixXcd& m);

// Negative log-likelihood up to its additive constant. Frame/tap pairs whose
// delayed index falls before the first frame are excluded.
double objective(const std::vector<Eigen::MatrixXcd>& demixing,
                 const NmfFactors& factors, const MixtureSpectrogram& x,
                 const CtfConfig& config);

// Same objective evaluated from already-computed PSDs and estimates.
double objective_from_parts(const std::vector<Eigen::MatrixXcd>& demixing,
                            const std::vector<Eigen::MatrixXd>& lambdas,
                            const DelayedEstimates& estimates,
                            const CtfConfig& config);

// Q = (1/J) sum_j x_j x_j^H / lambda[bin][j - tap]. Frames with j < tap
// contribute zero; the result is symmetrized to exact Hermitian form.
Eigen::MatrixXcd compute_weighted_covariance(const MixtureSpectrogram& x,
                                             const Eigen::MatrixXd& lambda,
                                             int tap, int bin);

// One iterative-projection row update: w_r <- (W Q)^{-1} e_r followed by
// w_r <- w_r (w_r^H Q w_r)^{-1/2}. On a singular system the covariance is
// diagonally loaded by 1e-10 trace(Q)/M and the solve retried once.
void ip_update(Eigen::MatrixXcd& demixing_bin, const Eigen::MatrixXcd& cov,
               int row);

// Closed-form steering vector for the rank-1 update W <- W - z w_r^H:
//   z_p = (w_p^H Q_p w_r) / (w_r^H Q_p w_r)     for p != r
//   z_r = 1 - (w_r^H Q_r w_r)^{-1/2}
Eigen::VectorXcd iss_compute_z(const Eigen::MatrixXcd& demixing_bin,
                               const std::vector<Eigen::MatrixXcd>& covs,
                               int row);

// Applies W <- W - z w_r^H using the pre-update row r.
void iss_apply(Eigen::MatrixXcd& demixing_bin, const Eigen::VectorXcd& z,
               int row);

// One full steering sweep (rows 0..L-1) over a single bin, working in the
// estimate domain: z is computed from the running y = W x, then W and y get
// the same rank-1 correction. Equivalent to iss_compute_z + iss_apply with
// per-row covariances, at O(L J) per coordinate instead of O(L M^2).
void iss_sweep(Eigen::MatrixXcd& demixing_bin, Eigen::MatrixXcd& estimates_bin,
               const std::vector<Eigen::MatrixXd>& lambdas,
               const CtfConfig& config, int bin);

// y_i = W_i x_i for every bin.
DelayedEstimates demix(const std::vector<Eigen::MatrixXcd>& demixing,
                       const MixtureSpectrogram& x);

// Multiplicative updates. Both recompute the source PSD from the current
// factors before updating and floor the result.
void mu_update_bases(NmfFactors& factors, const DelayedEstimates& estimates,
                     int source, const CtfConfig& config);
void mu_update_activations(NmfFactors& factors, const DelayedEstimates& estimates,
                           int source, const CtfConfig& config);

// Per-row average-power normalization: row (n, l) of W and y is divided by
// mu_{n,l}, B_n by mu_{n,0}^2. Rows with zero power are skipped.
void rescale(std::vector<Eigen::MatrixXcd>& demixing, NmfFactors& factors,
             DelayedEstimates& estimates, const CtfConfig& config);

// Full optimization loop: for each iteration, a demixing sweep over all rows
// and bins, an estimate refresh, MU basis then activation updates with PSD
// refresh in between, rescaling, and objective/timing bookkeeping.
SeparationResult run(const CtfConfig& config, const MixtureSpectrogram& x,
                     const CheckOptions& checks = {});

}  // namespace ctfmnmf

// Scale-invariant SDR and best-permutation scoring of separated signals.

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace ctfmnmf {

// 10 log10(||a s||^2 / ||a s - e||^2) with a = <e, s>/||s||^2, capped at
// +80 dB. Throws on a zero reference.
double si_sdr(const Eigen::VectorXd& estimate, const Eigen::VectorXd& reference);

struct SeparationReport {
  std::vector<double> si_sdr_db;           // per reference source
  std::vector<double> improvement_db;      // vs the unprocessed mixture
  std::vector<int> permutation;            // estimate index per reference
  double mean_db = 0.0;
  double median_db = 0.0;
  double mean_improvement_db = 0.0;
  double median_improvement_db = 0.0;

  std::string to_json() const;
  static std::string csv_header();
  std::string to_csv_row() const;
};

// Exhaustive permutation search (N <= 8) maximizing mean SI-SDR.
// improvement is per-source SI-SDR minus the SI-SDR of mixture_ref against
// the same reference.
SeparationReport align_and_score(const std::vector<Eigen::VectorXd>& estimates,
                                 const std::vector<Eigen::VectorXd>& references,
                                 const Eigen::VectorXd& mixture_ref);

}  // namespace ctfmnmf

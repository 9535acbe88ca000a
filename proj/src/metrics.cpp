#include "ctfmnmf/metrics.hpp"

#include "ctfmnmf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ctfmnmf {

namespace {
constexpr double kSiSdrCapDb = 80.0;

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid]
                                : 0.5 * (values[mid - 1] + values[mid]);
}

double mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}
}  // namespace

double si_sdr(const Eigen::VectorXd& estimate, const Eigen::VectorXd& reference) {
  if (estimate.size() != reference.size())
    throw ConfigError("si_sdr: length mismatch");
  const double ref_energy = reference.squaredNorm();
  if (!(ref_energy > 0.0)) throw ConfigError("si_sdr: zero reference");

  const double alpha = estimate.dot(reference) / ref_energy;
  const double target_energy = alpha * alpha * ref_energy;
  const double error_energy = (alpha * reference - estimate).squaredNorm();
  if (!(target_energy > 0.0)) return -kSiSdrCapDb;
  if (error_energy <= target_energy * 1e-8 * 1e-8) return kSiSdrCapDb;
  return std::min(kSiSdrCapDb, 10.0 * std::log10(target_energy / error_energy));
}

SeparationReport align_and_score(const std::vector<Eigen::VectorXd>& estimates,
                                 const std::vector<Eigen::VectorXd>& references,
                                 const Eigen::VectorXd& mixture_ref) {
  const int n = static_cast<int>(references.size());
  if (static_cast<int>(estimates.size()) != n)
    throw ConfigError("align_and_score: estimate/reference count mismatch");
  if (n > 8)
    throw ConfigError("align_and_score: exhaustive search limited to 8 sources");

  // Pairwise scores, then brute-force over all assignments.
  Eigen::MatrixXd scores(n, n);
  for (int e = 0; e < n; ++e)
    for (int r = 0; r < n; ++r)
      scores(e, r) = si_sdr(estimates[static_cast<size_t>(e)],
                            references[static_cast<size_t>(r)]);

  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_total = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int r = 0; r < n; ++r) total += scores(perm[static_cast<size_t>(r)], r);
    if (total > best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  SeparationReport report;
  report.permutation = best;
  for (int r = 0; r < n; ++r) {
    const double score = scores(best[static_cast<size_t>(r)], r);
    const double baseline = si_sdr(mixture_ref, references[static_cast<size_t>(r)]);
    report.si_sdr_db.push_back(score);
    report.improvement_db.push_back(score - baseline);
  }
  report.mean_db = mean(report.si_sdr_db);
  report.median_db = median(report.si_sdr_db);
  report.mean_improvement_db = mean(report.improvement_db);
  report.median_improvement_db = median(report.improvement_db);
  return report;
}

std::string SeparationReport::to_json() const {
  std::ostringstream out;
  out.precision(10);
  auto list = [&out](const char* name, const std::vector<double>& v) {
    out << "\"" << name << "\":[";
    for (size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
    out << "]";
  };
  out << "{";
  list("si_sdr_db", si_sdr_db);
  out << ",";
  list("si_sdr_improvement_db", improvement_db);
  out << ",\"permutation\":[";
  for (size_t i = 0; i < permutation.size(); ++i)
    out << (i ? "," : "") << permutation[i];
  out << "],\"mean_db\":" << mean_db << ",\"median_db\":" << median_db
      << ",\"mean_improvement_db\":" << mean_improvement_db
      << ",\"median_improvement_db\":" << median_improvement_db << "}";
  return out.str();
}

std::string SeparationReport::csv_header() {
  return "mean_db,median_db,mean_improvement_db,median_improvement_db,permutation";
}

std::string SeparationReport::to_csv_row() const {
  std::ostringstream out;
  out.precision(10);
  out << mean_db << ',' << median_db << ',' << mean_improvement_db << ','
      << median_improvement_db << ',';
  for (size_t i = 0; i < permutation.size(); ++i)
    out << (i ? " " : "") << permutation[i];
  return out.str();
}

}  // namespace ctfmnmf

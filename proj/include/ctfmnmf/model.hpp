// Problem configuration and the tensors shared by all estimation stages.

#pragma once

#include "ctfmnmf/types.hpp"

#include <Eigen/Dense>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace ctfmnmf {

enum class UpdateRule { Ip, Iss };

std::string to_string(UpdateRule rule);
UpdateRule parse_update_rule(const std::string& name);

struct CtfConfig {
  int num_sources = 2;
  int num_channels = 4;
  std::vector<int> taps_per_source;   // L_n; sum must equal num_channels
  std::vector<int> bases_per_source;  // K_n
  int iterations = 100;
  UpdateRule update_rule = UpdateRule::Iss;
  double psd_floor = 1e-10;  // relative to mean observed power
  std::uint64_t seed = 0;
  int threads = 1;

  int total_taps() const;        // L = sum of taps_per_source
  int row_offset(int source) const;
  void validate() const;         // throws ConfigError
};

// Applies one documented key (n_sources, n_channels, taps, bases, iters,
// rule, floor, seed, threads). Returns false when the key is unknown so the
// caller can handle its own extensions.
bool apply_config_key(CtfConfig& config, const std::string& key,
                      const std::string& value);

// Parses a flat "key = value" file. Unknown keys are returned to the caller
// instead of being rejected; '#' starts a comment.
std::map<std::string, std::string> parse_config_file(const std::string& path,
                                                     CtfConfig& config);

// Maps (source, tap) to the flat demixing-row index and back. All indices are
// zero-based; rows for source n start at row_offset(n).
int flatten_index(const CtfConfig& config, int source, int tap);
std::pair<int, int> unflatten_index(const CtfConfig& config, int row);

// Mixture STFT stored as one channels x frames matrix per frequency bin, the
// shape every per-bin update works in.
struct MixtureSpectrogram {
  std::vector<Eigen::MatrixXcd> bins;

  int num_bins() const { return static_cast<int>(bins.size()); }
  int num_channels() const { return bins.empty() ? 0 : static_cast<int>(bins[0].rows()); }
  int num_frames() const { return bins.empty() ? 0 : static_cast<int>(bins[0].cols()); }
  double mean_power() const;

  static MixtureSpectrogram from_spectrogram(const Spectrogram& spec);
  // meta supplies window/hop/rate fields for the round trip back to disk.
  Spectrogram to_spectrogram(const Spectrogram& meta) const;
};

// Per-source nonnegative NMF factors. floor is an absolute lower bound kept
// on every entry and on the synthesized PSD.
struct NmfFactors {
  std::vector<Eigen::MatrixXd> bases;        // B_n: I x K_n
  std::vector<Eigen::MatrixXd> activations;  // V_n: K_n x J
  double floor = 1e-12;

  int num_sources() const { return static_cast<int>(bases.size()); }
  int num_bins() const { return bases.empty() ? 0 : static_cast<int>(bases[0].rows()); }
  int num_frames() const {
    return activations.empty() ? 0 : static_cast<int>(activations[0].cols());
  }
};

// Entries uniform in (0.1, 1.0), consumed in source order, bases before
// activations, row-major.
NmfFactors random_factors(const CtfConfig& config, int num_bins, int num_frames,
                          double floor_abs, std::mt19937_64& rng);

// lambda_n = B_n V_n, floored. I x J.
Eigen::MatrixXd compute_psd(const NmfFactors& factors, int source);

// lambda_n[i][j - l] with the frame index clamped to 0 (frames are 0-based).
double delayed_psd(const Eigen::MatrixXd& lambda, int bin, int frame, int tap);

// Identity demixing stack: one L x M identity per bin (L == M).
std::vector<Eigen::MatrixXcd> identity_demixing(const CtfConfig& config, int num_bins);

}  // namespace ctfmnmf

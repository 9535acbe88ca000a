// Seeded ground-truth generators: NMF-structured Gaussian sources, CTF-domain
// mixtures (exact model match), and time-domain convolutive mixtures.

#pragma once

#include "ctfmnmf/model.hpp"
#include "ctfmnmf/types.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace ctfmnmf {

struct NmfSources {
  std::vector<Eigen::MatrixXcd> spectrograms;  // N entries, I x J
  NmfFactors factors;                          // the true factors behind them
};

// Circular complex Gaussian draws with variance lambda = B V; B, V uniform in
// (0.1, 1.0).
NmfSources sample_nmf_sources(int num_bins, int num_frames, int num_sources,
                              int num_bases, std::uint64_t seed);

// Band-to-band mixing filters h[m][n][i][l], stored per bin as the assembled
// M x L matrix whose column blocks follow the flatten order.
struct CtfFilters {
  std::vector<Eigen::MatrixXcd> bins;
  std::vector<int> taps_per_source;

  int num_bins() const { return static_cast<int>(bins.size()); }
  int num_channels() const { return bins.empty() ? 0 : static_cast<int>(bins[0].rows()); }
};

// Complex Gaussian taps with per-tap magnitude decay^l, resampled per bin
// until the assembled matrix has condition number < 100 (at most 100
// attempts per bin).
CtfFilters sample_ctf_filters(int num_channels, int num_sources,
                              const std::vector<int>& taps_per_source,
                              double decay, std::uint64_t seed, int num_bins);

struct CtfMixture {
  MixtureSpectrogram mixture;
  std::vector<MixtureSpectrogram> images;  // per-source microphone images
};

// x_{m,i,j} = sum_n sum_l h_{m,n,i,l} s_{n,i,j-l}; sources are silent before
// the first frame. The per-source image is the inner sum over l.
CtfMixture generate_ctf_mixture(const std::vector<Eigen::MatrixXcd>& sources,
                                const CtfFilters& filters);

struct TimeMixture {
  TimeSignal mixture;
  std::vector<TimeSignal> images;
};

// Linear convolution of each source with its per-channel FIR, summed over
// sources. firs[m][n] is the impulse response from source n to channel m.
TimeMixture generate_time_mixture(
    const std::vector<Eigen::VectorXd>& sources,
    const std::vector<std::vector<Eigen::VectorXd>>& firs, double sample_rate);

// Random exponential-decay FIRs for the time-domain generator, one per
// (channel, source) pair.
std::vector<std::vector<Eigen::VectorXd>> sample_decay_firs(
    int num_channels, int num_sources, int fir_len, double decay,
    std::uint64_t seed);

}  // namespace ctfmnmf

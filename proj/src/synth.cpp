#include "ctfmnmf/synth.hpp"

#include "ctfmnmf/errors.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <random>

namespace ctfmnmf {

NmfSources sample_nmf_sources(int num_bins, int num_frames, int num_sources,
                              int num_bases, std::uint64_t seed) {
  if (num_bases < 1) throw ConfigError("sample_nmf_sources: bases must be >= 1");
  std::mt19937_64 rng(seed);
  // Log-uniform factors give the sources tens of dB of variance diversity,
  // the property that makes Gaussian sources separable at all. Flat draws
  // produce nearly stationary sources whose mixtures are unidentifiable.
  std::uniform_real_distribution<double> log_uniform(std::log(0.02), std::log(1.0));
  std::normal_distribution<double> gauss(0.0, 1.0);

  NmfSources out;
  out.factors.floor = 0.0;
  out.factors.bases.resize(static_cast<size_t>(num_sources));
  out.factors.activations.resize(static_cast<size_t>(num_sources));
  out.spectrograms.resize(static_cast<size_t>(num_sources));

  for (int n = 0; n < num_sources; ++n) {
    Eigen::MatrixXd& b = out.factors.bases[static_cast<size_t>(n)];
    Eigen::MatrixXd& v = out.factors.activations[static_cast<size_t>(n)];
    b.resize(num_bins, num_bases);
    v.resize(num_bases, num_frames);
    for (int i = 0; i < num_bins; ++i)
      for (int k = 0; k < num_bases; ++k) b(i, k) = std::exp(log_uniform(rng));
    for (int k = 0; k < num_bases; ++k)
      for (int j = 0; j < num_frames; ++j) v(k, j) = std::exp(log_uniform(rng));

    const Eigen::MatrixXd lambda = b * v;
    Eigen::MatrixXcd& s = out.spectrograms[static_cast<size_t>(n)];
    s.resize(num_bins, num_frames);
    for (int i = 0; i < num_bins; ++i)
      for (int j = 0; j < num_frames; ++j) {
        const double sigma = std::sqrt(lambda(i, j) / 2.0);
        s(i, j) = Complex(sigma * gauss(rng), sigma * gauss(rng));
      }
  }
  return out;
}

CtfFilters sample_ctf_filters(int num_channels, int num_sources,
                              const std::vector<int>& taps_per_source,
                              double decay, std::uint64_t seed, int num_bins) {
  int total_taps = 0;
  for (int l : taps_per_source) total_taps += l;
  if (total_taps != num_channels)
    throw ConfigError("sample_ctf_filters: sum of taps must equal channel count");
  if (static_cast<int>(taps_per_source.size()) != num_sources)
    throw ConfigError("sample_ctf_filters: one tap count per source required");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  CtfFilters filters;
  filters.taps_per_source = taps_per_source;
  filters.bins.resize(static_cast<size_t>(num_bins));

  for (int i = 0; i < num_bins; ++i) {
    Eigen::MatrixXcd h(num_channels, total_taps);
    bool accepted = false;
    for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
      int col = 0;
      for (int n = 0; n < num_sources; ++n) {
        for (int l = 0; l < taps_per_source[static_cast<size_t>(n)]; ++l, ++col) {
          const double scale = std::pow(decay, l) / std::sqrt(2.0);
          for (int m = 0; m < num_channels; ++m)
            h(m, col) = scale * Complex(gauss(rng), gauss(rng));
        }
      }
      const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h);
      const double smin = svd.singularValues().minCoeff();
      accepted = smin > 0.0 && svd.singularValues().maxCoeff() / smin < 100.0;
    }
    if (!accepted)
      throw DegeneracyError(
          "sample_ctf_filters: no well-conditioned mixing matrix after 100 "
          "attempts (decay too aggressive?)",
          -1, i);
    filters.bins[static_cast<size_t>(i)] = std::move(h);
  }
  return filters;
}

CtfMixture generate_ctf_mixture(const std::vector<Eigen::MatrixXcd>& sources,
                                const CtfFilters& filters) {
  const int num_sources = static_cast<int>(sources.size());
  if (num_sources != static_cast<int>(filters.taps_per_source.size()))
    throw ConfigError("generate_ctf_mixture: source/filter count mismatch");
  const int num_bins = static_cast<int>(sources[0].rows());
  if (num_bins != filters.num_bins())
    throw ConfigError("generate_ctf_mixture: bin count mismatch");
  const int frames = static_cast<int>(sources[0].cols());
  const int channels = filters.num_channels();

  CtfMixture out;
  out.images.resize(static_cast<size_t>(num_sources));
  for (auto& image : out.images) {
    image.bins.resize(static_cast<size_t>(num_bins));
    for (auto& b : image.bins) b = Eigen::MatrixXcd::Zero(channels, frames);
  }
  out.mixture.bins.resize(static_cast<size_t>(num_bins));

  for (int i = 0; i < num_bins; ++i) {
    const Eigen::MatrixXcd& h = filters.bins[static_cast<size_t>(i)];
    int col = 0;
    for (int n = 0; n < num_sources; ++n) {
      Eigen::MatrixXcd& image = out.images[static_cast<size_t>(n)].bins[static_cast<size_t>(i)];
      for (int l = 0; l < filters.taps_per_source[static_cast<size_t>(n)]; ++l, ++col) {
        const Eigen::VectorXcd tap = h.col(col);
        for (int j = l; j < frames; ++j)
          image.col(j).noalias() += tap * sources[static_cast<size_t>(n)](i, j - l);
      }
    }
    Eigen::MatrixXcd& x = out.mixture.bins[static_cast<size_t>(i)];
    x = Eigen::MatrixXcd::Zero(channels, frames);
    for (const auto& image : out.images)
      x += image.bins[static_cast<size_t>(i)];
  }
  return out;
}

TimeMixture generate_time_mixture(
    const std::vector<Eigen::VectorXd>& sources,
    const std::vector<std::vector<Eigen::VectorXd>>& firs, double sample_rate) {
  const int num_channels = static_cast<int>(firs.size());
  const int num_sources = static_cast<int>(sources.size());
  if (num_channels == 0 ||
      static_cast<int>(firs[0].size()) != num_sources)
    throw ConfigError("generate_time_mixture: firs must be [channel][source]");

  std::int64_t max_fir = 0;
  for (const auto& row : firs)
    for (const auto& fir : row) max_fir = std::max(max_fir, fir.size());
  const std::int64_t src_len = sources[0].size();
  const std::int64_t out_len = src_len + max_fir - 1;

  TimeMixture out;
  out.images.resize(static_cast<size_t>(num_sources));
  for (auto& image : out.images) {
    image.sample_rate = sample_rate;
    image.samples = Eigen::MatrixXd::Zero(out_len, num_channels);
  }

  for (int n = 0; n < num_sources; ++n) {
    const Eigen::VectorXd& s = sources[static_cast<size_t>(n)];
    for (int m = 0; m < num_channels; ++m) {
      const Eigen::VectorXd& fir = firs[static_cast<size_t>(m)][static_cast<size_t>(n)];
      for (std::int64_t k = 0; k < fir.size(); ++k) {
        if (fir[k] == 0.0) continue;
        out.images[static_cast<size_t>(n)].samples.col(m).segment(k, src_len) +=
            fir[k] * s;
      }
    }
  }

  out.mixture.sample_rate = sample_rate;
  out.mixture.samples = Eigen::MatrixXd::Zero(out_len, num_channels);
  for (const auto& image : out.images) out.mixture.samples += image.samples;
  return out;
}

std::vector<std::vector<Eigen::VectorXd>> sample_decay_firs(
    int num_channels, int num_sources, int fir_len, double decay,
    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<Eigen::VectorXd>> firs(
      static_cast<size_t>(num_channels));
  for (int m = 0; m < num_channels; ++m) {
    firs[static_cast<size_t>(m)].resize(static_cast<size_t>(num_sources));
    for (int n = 0; n < num_sources; ++n) {
      Eigen::VectorXd fir(fir_len);
      for (int k = 0; k < fir_len; ++k)
        fir[k] = std::pow(decay, static_cast<double>(k) / std::max(1, fir_len / 8)) *
                 gauss(rng);
      firs[static_cast<size_t>(m)][static_cast<size_t>(n)] = fir;
    }
  }
  return firs;
}

}  // namespace ctfmnmf

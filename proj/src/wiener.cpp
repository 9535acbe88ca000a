#include "ctfmnmf/wiener.hpp"

#include "ctfmnmf/errors.hpp"
#include "ctfmnmf/threading.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace ctfmnmf {

std::vector<MixtureSpectrogram> reconstruct_images(
    const std::vector<Eigen::MatrixXcd>& demixing, const NmfFactors& factors,
    const MixtureSpectrogram& x, const CtfConfig& config) {
  const int num_bins = x.num_bins();
  const int frames = x.num_frames();
  const int channels = x.num_channels();
  const int sources = config.num_sources;
  if (factors.num_sources() != sources)
    throw ConfigError("image reconstruction: factor count does not match config");

  std::vector<MixtureSpectrogram> images(static_cast<size_t>(sources));
  for (auto& image : images) {
    image.bins.resize(static_cast<size_t>(num_bins));
    for (auto& b : image.bins) b.resize(channels, frames);
  }

  // With the square invertible mixing H = W^{-1}, the Wiener gain
  // H_n Lambda_n H_n^H (H Lambda H^H)^{-1} collapses: the inverse factors as
  // W^H Lambda^{-1} W, the PSD blocks cancel exactly, and each image is the
  // source's delayed estimates remixed through its column block,
  // c_n = H_n y_n. Computing the cancelled form avoids inverting a matrix
  // whose conditioning is set by the PSD floor.
  parallel_for(0, num_bins, config.threads, [&](int i) {
    const Eigen::MatrixXcd& w = demixing[static_cast<size_t>(i)];
    const Eigen::MatrixXcd mixing =
        Eigen::PartialPivLU<Eigen::MatrixXcd>(w).inverse();
    if (!mixing.allFinite())
      throw DegeneracyError("image reconstruction: demixing matrix not invertible",
                            -1, i);
    const Eigen::MatrixXcd estimates = w * x.bins[static_cast<size_t>(i)];
    for (int n = 0; n < sources; ++n) {
      const int r0 = config.row_offset(n);
      const int taps = config.taps_per_source[static_cast<size_t>(n)];
      images[static_cast<size_t>(n)].bins[static_cast<size_t>(i)].noalias() =
          mixing.middleCols(r0, taps) * estimates.middleRows(r0, taps);
    }
  });
  return images;
}

TimeSignal image_to_signal(const MixtureSpectrogram& image,
                           const Spectrogram& meta, int ref_channel) {
  Spectrogram spec = image.to_spectrogram(meta);
  TimeSignal all = inverse_stft(spec);
  if (ref_channel < 0) return all;
  if (ref_channel >= all.channels())
    throw ConfigError("ref_channel " + std::to_string(ref_channel) +
                      " out of range for " + std::to_string(all.channels()) +
                      " channels");
  TimeSignal mono;
  mono.sample_rate = all.sample_rate;
  mono.samples = all.samples.col(ref_channel);
  return mono;
}

}  // namespace ctfmnmf

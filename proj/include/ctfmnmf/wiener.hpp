// Multichannel Wiener reconstruction of per-source spatial images from the
// converged demixing system and source PSDs.

#pragma once

#include "ctfmnmf/estimator.hpp"
#include "ctfmnmf/model.hpp"
#include "ctfmnmf/stft.hpp"

#include <vector>

namespace ctfmnmf {

// For each (bin, frame): c_n = H_n Lambda_n H_n^H (H Lambda H^H)^{-1} x with
// H = W^{-1} and Lambda the per-source delayed-PSD diagonal (frame index
// clamped at the first frame). The inner matrix is always diagonally loaded
// by 1e-10 trace/M before the solve.
std::vector<MixtureSpectrogram> reconstruct_images(
    const std::vector<Eigen::MatrixXcd>& demixing, const NmfFactors& factors,
    const MixtureSpectrogram& x, const CtfConfig& config);

// Inverse STFT of one source image. ref_channel < 0 keeps all channels.
TimeSignal image_to_signal(const MixtureSpectrogram& image,
                           const Spectrogram& meta, int ref_channel = -1);

}  // namespace ctfmnmf

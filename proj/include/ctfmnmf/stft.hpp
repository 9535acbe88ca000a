#pragma once

#include "ctfmnmf/types.hpp"

#include <Eigen/Dense>

namespace ctfmnmf {

// Periodic Hann window of the given length: w[t] = 0.5 - 0.5*cos(2*pi*t/len).
Eigen::VectorXd hann_window(int window_len);

// Forward STFT with periodic Hann analysis window. window_len must be a power
// of two and hop must divide window_len. The signal is reflect-padded by
// window_len/2 on both ends so every input sample is covered by full frames.
Spectrogram forward_stft(const TimeSignal& signal, int window_len, int hop);

// Weighted overlap-add inverse. Exact reconstruction for any window/hop pair
// whose squared-window overlap stays bounded away from zero (checked).
TimeSignal inverse_stft(const Spectrogram& spec);

}  // namespace ctfmnmf

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <vector>

namespace ctfmnmf {

using Complex = std::complex<double>;

// Multichannel time-domain signal. samples is length x channels.
struct TimeSignal {
  Eigen::MatrixXd samples;
  double sample_rate = 0.0;

  std::int64_t length() const { return samples.rows(); }
  int channels() const { return static_cast<int>(samples.cols()); }
};

// One-sided complex STFT tensor, indexed [bin][frame][channel].
// original_length is the pre-padding sample count, needed by the inverse to
// trim back to the input size.
struct Spectrogram {
  int bins = 0;      // I = window_len/2 + 1
  int frames = 0;    // J
  int channels = 0;  // M
  int window_len = 0;
  int hop = 0;
  double sample_rate = 0.0;
  std::int64_t original_length = 0;
  std::vector<Complex> data;  // (i * frames + j) * channels + c

  Complex& at(int i, int j, int c) {
    return data[(static_cast<size_t>(i) * frames + j) * channels + c];
  }
  Complex at(int i, int j, int c) const {
    return data[(static_cast<size_t>(i) * frames + j) * channels + c];
  }
  void resize(int bins_, int frames_, int channels_) {
    bins = bins_;
    frames = frames_;
    channels = channels_;
    data.assign(static_cast<size_t>(bins) * frames * channels, Complex(0, 0));
  }
};

}  // namespace ctfmnmf

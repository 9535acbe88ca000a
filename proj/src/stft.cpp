#include "ctfmnmf/stft.hpp"

#include "ctfmnmf/errors.hpp"
#include "ctfmnmf/fft.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace ctfmnmf {

Eigen::VectorXd hann_window(int window_len) {
  Eigen::VectorXd w(window_len);
  for (int t = 0; t < window_len; ++t)
    w[t] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / window_len);
  return w;
}

namespace {

// Reflect-pad by window_len/2 on both ends, then zero-extend so the frame
// grid covers every input sample.
Eigen::VectorXd pad_channel(const Eigen::VectorXd& x, int window_len,
                            std::int64_t padded_len) {
  const std::int64_t n = x.size();
  const int half = window_len / 2;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(padded_len);
  for (int t = 0; t < half; ++t) {
    std::int64_t src = half - t;  // reflect without repeating the edge sample
    if (src >= n) src = n - 1;
    out[t] = x[src];
  }
  out.segment(half, n) = x;
  for (std::int64_t t = half + n; t < padded_len; ++t) {
    std::int64_t src = 2 * n - 2 - (t - half);
    if (src < 0) src = 0;
    if (src >= n) break;  // beyond one reflection length: leave zeros
    out[t] = x[src];
  }
  return out;
}

}  // namespace

Spectrogram forward_stft(const TimeSignal& signal, int window_len, int hop) {
  if (signal.length() == 0 || signal.channels() == 0)
    throw ConfigError("forward_stft: empty signal");
  if (window_len <= 0 || !is_power_of_two(static_cast<size_t>(window_len)))
    throw ConfigError("forward_stft: window_len must be a power of two, got " +
                      std::to_string(window_len));
  if (hop <= 0 || window_len % hop != 0)
    throw ConfigError("forward_stft: hop must divide window_len");
  if (signal.length() < window_len)
    throw ConfigError("forward_stft: signal shorter than one window");

  const std::int64_t n = signal.length();
  const int channels = signal.channels();
  const int bins = window_len / 2 + 1;
  const int frames = static_cast<int>(1 + (n + hop - 1) / hop);
  const std::int64_t padded_len =
      static_cast<std::int64_t>(frames - 1) * hop + window_len;

  Spectrogram spec;
  spec.resize(bins, frames, channels);
  spec.window_len = window_len;
  spec.hop = hop;
  spec.sample_rate = signal.sample_rate;
  spec.original_length = n;

  const Eigen::VectorXd window = hann_window(window_len);
  std::vector<Complex> frame(static_cast<size_t>(window_len));
  for (int c = 0; c < channels; ++c) {
    const Eigen::VectorXd padded =
        pad_channel(signal.samples.col(c), window_len, padded_len);
    for (int j = 0; j < frames; ++j) {
      const std::int64_t start = static_cast<std::int64_t>(j) * hop;
      for (int t = 0; t < window_len; ++t)
        frame[static_cast<size_t>(t)] = Complex(padded[start + t] * window[t], 0.0);
      fft_inplace(frame.data(), static_cast<size_t>(window_len), false);
      for (int i = 0; i < bins; ++i) spec.at(i, j, c) = frame[static_cast<size_t>(i)];
    }
  }
  return spec;
}

TimeSignal inverse_stft(const Spectrogram& spec) {
  if (spec.bins != spec.window_len / 2 + 1)
    throw ConfigError("inverse_stft: bin count does not match window length");
  if (spec.hop <= 0 || spec.window_len % spec.hop != 0)
    throw ConfigError("inverse_stft: hop must divide window_len");

  const int window_len = spec.window_len;
  const int hop = spec.hop;
  const int frames = spec.frames;
  const int channels = spec.channels;
  const std::int64_t padded_len =
      static_cast<std::int64_t>(frames - 1) * hop + window_len;

  const Eigen::VectorXd window = hann_window(window_len);

  // Squared-window overlap per padded sample; the weighted overlap-add is
  // divided by this, which makes reconstruction exact wherever it is nonzero.
  Eigen::VectorXd overlap = Eigen::VectorXd::Zero(padded_len);
  for (int j = 0; j < frames; ++j)
    for (int t = 0; t < window_len; ++t)
      overlap[static_cast<std::int64_t>(j) * hop + t] += window[t] * window[t];

  const int half = window_len / 2;
  const std::int64_t out_len =
      spec.original_length > 0 ? spec.original_length : padded_len - window_len;
  if (out_len + half > padded_len)
    throw ConfigError("inverse_stft: original_length inconsistent with frames");
  const double peak = overlap.maxCoeff();
  for (std::int64_t t = half; t < half + out_len; ++t)
    if (overlap[t] < 1e-9 * peak)
      throw ConfigError("inverse_stft: window/hop pair does not cover the signal");

  TimeSignal out;
  out.sample_rate = spec.sample_rate;
  out.samples = Eigen::MatrixXd::Zero(out_len, channels);

  std::vector<Complex> frame(static_cast<size_t>(window_len));
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(padded_len);
  for (int c = 0; c < channels; ++c) {
    acc.setZero();
    for (int j = 0; j < frames; ++j) {
      for (int i = 0; i < spec.bins; ++i) frame[static_cast<size_t>(i)] = spec.at(i, j, c);
      for (int i = spec.bins; i < window_len; ++i)
        frame[static_cast<size_t>(i)] = std::conj(spec.at(window_len - i, j, c));
      fft_inplace(frame.data(), static_cast<size_t>(window_len), true);
      const std::int64_t start = static_cast<std::int64_t>(j) * hop;
      for (int t = 0; t < window_len; ++t)
        acc[start + t] += frame[static_cast<size_t>(t)].real() * window[t];
    }
    for (std::int64_t t = 0; t < out_len; ++t)
      out.samples(t, c) = acc[half + t] / overlap[half + t];
  }
  return out;
}

}  // namespace ctfmnmf

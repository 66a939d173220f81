#include "deepcough/features.hpp"

#include <cmath>
#include <numbers>

#include "deepcough/dsp.hpp"

namespace deepcough {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

// n_filters + 2 edge frequencies; filter j spans edges j..j+2.
Eigen::VectorXd mel_edges(int n_filters, int sample_rate) {
  const double top = hz_to_mel(sample_rate / 2.0);
  Eigen::VectorXd edges(n_filters + 2);
  for (int i = 0; i < n_filters + 2; ++i) edges[i] = mel_to_hz(top * i / (n_filters + 1));
  return edges;
}

}  // namespace

Eigen::VectorXd mel_center_frequencies(int n_filters, int sample_rate) {
  return mel_edges(n_filters, sample_rate).segment(1, n_filters);
}

Eigen::MatrixXd mel_filterbank(int n_filters, int n_fft, int sample_rate) {
  if (n_filters < kMfccCoefficients)
    throw Error(ErrorCode::InvalidArgument, "need at least 13 mel filters");
  if (n_fft < 2 || n_fft % 2 != 0) throw Error(ErrorCode::InvalidArgument, "n_fft must be even");
  const Eigen::VectorXd edges = mel_edges(n_filters, sample_rate);
  const int n_bins = n_fft / 2 + 1;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_filters, n_bins);
  for (int j = 0; j < n_filters; ++j) {
    const double lo = edges[j], centre = edges[j + 1], hi = edges[j + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      if (f > lo && f <= centre)
        fb(j, k) = (f - lo) / (centre - lo);
      else if (f > centre && f < hi)
        fb(j, k) = (hi - f) / (hi - centre);
    }
  }
  return fb;
}

Eigen::MatrixXd dct2_matrix(int n) {
  Eigen::MatrixXd d(n, n);
  for (int k = 0; k < n; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    for (int i = 0; i < n; ++i) d(k, i) = scale * std::cos(std::numbers::pi * k * (2 * i + 1) / (2.0 * n));
  }
  return d;
}

int mfcc_fft_size(int frame_length) {
  int n = 1;
  while (n <= frame_length) n *= 2;
  return n;
}

MfccExtractor::MfccExtractor(int frame_length, int sample_rate)
    : frame_length_(frame_length),
      fft_size_(mfcc_fft_size(frame_length)),
      window_(hann_window(frame_length)),
      filterbank_(mel_filterbank(kMelFilters, fft_size_, sample_rate)),
      dct_(dct2_matrix(kMelFilters).topRows(kMfccCoefficients)) {
  if (frame_length < 2) throw Error(ErrorCode::InvalidArgument, "MFCC frame must have >= 2 samples");
}

Eigen::VectorXd MfccExtractor::operator()(std::span<const float> frame) const {
  if (static_cast<int>(frame.size()) != frame_length_)
    throw Error(ErrorCode::ShapeMismatch, "MFCC frame has " + std::to_string(frame.size()) + " samples, expected " +
                                              std::to_string(frame_length_));
  std::vector<double> buf(static_cast<std::size_t>(fft_size_), 0.0);
  for (int n = 0; n < frame_length_; ++n) {
    const double emphasised = n == 0 ? frame[0] : frame[n] - kPreEmphasis * frame[n - 1];
    buf[static_cast<std::size_t>(n)] = window_[n] * emphasised;
  }
  const auto spectrum = real_fft(buf);
  Eigen::VectorXd power(fft_size_ / 2 + 1);
  for (Eigen::Index k = 0; k < power.size(); ++k) power[k] = std::norm(spectrum[static_cast<std::size_t>(k)]);
  const Eigen::VectorXd log_energy = ((filterbank_ * power).array() + kMelLogFloor).log();
  return dct_ * log_energy;
}

Eigen::VectorXd mfcc_frame(std::span<const float> samples, int sample_rate) {
  return MfccExtractor(static_cast<int>(samples.size()), sample_rate)(samples);
}

MfccSequence mfcc_sequence(std::span<const float> samples, MfccConfig config, int sample_rate) {
  if (!(config.hop_ms > 0.0) || config.hop_ms > config.frame_ms)
    throw Error(ErrorCode::InvalidArgument, "hop must be positive and no longer than the frame");
  const auto frame_len = static_cast<std::size_t>(std::llround(config.frame_ms * sample_rate / 1000.0));
  const auto hop = static_cast<std::size_t>(std::llround(config.hop_ms * sample_rate / 1000.0));
  if (frame_len > samples.size())
    throw Error(ErrorCode::FrameTooLong, std::to_string(frame_len) + "-sample frame exceeds " +
                                             std::to_string(samples.size()) + "-sample input");

  const MfccExtractor extract(static_cast<int>(frame_len), sample_rate);
  const std::size_t count = (samples.size() + hop - 1) / hop;
  MfccSequence seq;
  seq.frame_ms = config.frame_ms;
  seq.hop_ms = config.hop_ms;
  seq.coeffs.resize(static_cast<Eigen::Index>(count), kMfccCoefficients);
  std::vector<float> frame(frame_len);
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < frame_len; ++i)
      frame[i] = start + i < samples.size() ? samples[start + i] : 0.0f;
    seq.coeffs.row(static_cast<Eigen::Index>(t)) = extract(frame).transpose();
  }
  return seq;
}

}  // namespace deepcough

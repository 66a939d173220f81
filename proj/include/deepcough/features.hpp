#ifndef DEEPCOUGH_FEATURES_HPP
#define DEEPCOUGH_FEATURES_HPP

#include <Eigen/Core>

#include <complex>
#include <span>
#include <vector>

#include "deepcough/audio_io.hpp"

namespace deepcough {

inline constexpr int kMfccCoefficients = 13;
inline constexpr int kMelFilters = 26;
inline constexpr double kPreEmphasis = 0.97;
inline constexpr double kMelLogFloor = 1e-10;

struct MfccConfig {
  double frame_ms;
  double hop_ms;
};

// 8 ms frames with 50% overlap: 16 frames per 64 ms window.
inline constexpr MfccConfig kSegmentMfcc{8.0, 4.0};
// Non-overlapping 25 ms frames for the HMM baseline.
inline constexpr MfccConfig kHmmMfcc{25.0, 25.0};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Centres of the triangular filters, uniformly spaced on the mel scale
// between 0 Hz and Nyquist (endpoints excluded).
Eigen::VectorXd mel_center_frequencies(int n_filters, int sample_rate);

// n_filters x (n_fft / 2 + 1) triangular weights, evaluated at each bin's
// exact frequency.
Eigen::MatrixXd mel_filterbank(int n_filters, int n_fft, int sample_rate);

// Orthonormal DCT-II; its transpose is the inverse.
Eigen::MatrixXd dct2_matrix(int n);

// Smallest power of two strictly greater than the frame length.
int mfcc_fft_size(int frame_length);

// Pre-emphasis, Hann, zero-padded power spectrum, mel energies, log, DCT-II.
// Precomputes everything that depends only on the frame length.
class MfccExtractor {
 public:
  explicit MfccExtractor(int frame_length, int sample_rate = kPipelineRate);

  Eigen::VectorXd operator()(std::span<const float> frame) const;

  int frame_length() const { return frame_length_; }
  int fft_size() const { return fft_size_; }

 private:
  int frame_length_;
  int fft_size_;
  Eigen::VectorXd window_;
  Eigen::MatrixXd filterbank_;
  Eigen::MatrixXd dct_;
};

Eigen::VectorXd mfcc_frame(std::span<const float> samples, int sample_rate = kPipelineRate);

struct MfccSequence {
  Eigen::MatrixXd coeffs;  // T x 13
  double frame_ms = 0.0;
  double hop_ms = 0.0;

  Eigen::Index length() const { return coeffs.rows(); }
};

// ceil(n / hop) frames starting every hop samples, the tail zero-padded.
MfccSequence mfcc_sequence(std::span<const float> samples, MfccConfig config,
                           int sample_rate = kPipelineRate);

}  // namespace deepcough

#endif  // DEEPCOUGH_FEATURES_HPP

#ifndef DEEPCOUGH_DSP_HPP
#define DEEPCOUGH_DSP_HPP

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <filesystem>
#include <span>
#include <vector>

#include "deepcough/audio_io.hpp"

namespace deepcough {

inline constexpr int kFrameSize = 64;       // 4 ms at 16 kHz
inline constexpr int kWindowFrames = 16;    // 64 ms
inline constexpr int kWindowSamples = kFrameSize * kWindowFrames;
inline constexpr int kFftSize = 128;
inline constexpr int kSpectralBins = 64;
inline constexpr int kSegmentSize = kSpectralBins * kWindowFrames;
inline constexpr double kLogCompressionEpsilon = 1e-6;
inline constexpr float kDefaultAdmissionThreshold = 0.01f;
inline constexpr int kAugmentOverlap = 4;
inline constexpr int kAugmentHop = kWindowFrames - kAugmentOverlap;

// One frame per column.
using FrameMatrix = Eigen::Matrix<float, kFrameSize, Eigen::Dynamic>;
using WindowMatrix = Eigen::Matrix<float, kFrameSize, kWindowFrames>;
// Rows are frequency bins, columns are frames.
using SegmentMatrix = Eigen::Matrix<float, kSpectralBins, kWindowFrames>;

struct FrameSequence {
  FrameMatrix frames;
  int sample_rate = kPipelineRate;

  Eigen::Index count() const { return frames.cols(); }
};

struct AudioWindow {
  WindowMatrix samples;
  Eigen::Index origin_frame = 0;
};

struct SpectralSegment {
  SegmentMatrix values;
  Eigen::Index origin_frame = 0;
};

FrameSequence frame_signal(const AudioClip& clip);

// sqrt(mean(x^2)) over every sample of the block.
template <typename Derived>
double window_rms(const Eigen::MatrixBase<Derived>& block) {
  if (block.size() == 0) return 0.0;
  return std::sqrt(block.template cast<double>().squaredNorm() / static_cast<double>(block.size()));
}

// Sixteen consecutive frames starting at `origin`; frames past the end of
// the sequence (or before its start) read as zeros.
WindowMatrix window_at(const FrameSequence& frames, Eigen::Index origin);

// Non-overlapping 16-frame windows whose RMS exceeds the threshold. A
// trailing partial window is zero-padded.
std::vector<AudioWindow> admit_windows(const FrameSequence& frames, double threshold);

// 95th percentile (by default) of window RMS over a silence recording.
double calibrate_threshold(const AudioClip& silence, double percentile = 0.95);

// Periodic Hann window of the given length.
Eigen::VectorXd hann_window(int length);

// Unscaled forward DFT of a real signal; returns all n bins.
std::vector<std::complex<double>> real_fft(std::span<const double> x);

SegmentMatrix stft_segment(const WindowMatrix& window);

// Sliding 16-frame windows at stride `hop` covering the event; the last
// window is zero-padded past the end.
std::vector<AudioWindow> event_windows(const FrameSequence& frames, int hop = kAugmentHop);
std::vector<SpectralSegment> segment_event(const FrameSequence& frames, int hop = kAugmentHop);

// ceil((n - 16) / hop) + 1 for n >= 16, else 1.
Eigen::Index segment_count(Eigen::Index n_frames, int hop);

// Row-major flattening (bin-major) used as the network input layout.
Eigen::VectorXf flatten_segment(const SegmentMatrix& s);
SegmentMatrix unflatten_segment(const Eigen::Ref<const Eigen::VectorXf>& v);

// Debug matrix dump: "DCSG", u16 rows, u16 cols, then row-major f32.
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXf& m);
Eigen::MatrixXf read_matrix(const std::filesystem::path& path);

}  // namespace deepcough

#endif  // DEEPCOUGH_DSP_HPP

#include "deepcough/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

namespace deepcough {

FrameSequence frame_signal(const AudioClip& clip) {
  if (clip.sample_rate != kPipelineRate)
    throw Error(ErrorCode::WrongSampleRate,
                "expected " + std::to_string(kPipelineRate) + " Hz, got " + std::to_string(clip.sample_rate));
  const Eigen::Index n = clip.samples.size();
  const Eigen::Index count = (n + kFrameSize - 1) / kFrameSize;
  FrameSequence out;
  out.sample_rate = clip.sample_rate;
  out.frames = FrameMatrix::Zero(kFrameSize, count);
  // Column-major storage makes the frames one contiguous run of samples.
  std::copy_n(clip.samples.data(), n, out.frames.data());
  return out;
}

WindowMatrix window_at(const FrameSequence& frames, Eigen::Index origin) {
  WindowMatrix w = WindowMatrix::Zero();
  for (int f = 0; f < kWindowFrames; ++f) {
    const Eigen::Index src = origin + f;
    if (src >= 0 && src < frames.count()) w.col(f) = frames.frames.col(src);
  }
  return w;
}

std::vector<AudioWindow> admit_windows(const FrameSequence& frames, double threshold) {
  if (threshold < 0.0) throw Error(ErrorCode::InvalidArgument, "admission threshold must be >= 0");
  std::vector<AudioWindow> admitted;
  for (Eigen::Index origin = 0; origin < frames.count(); origin += kWindowFrames) {
    WindowMatrix w = window_at(frames, origin);
    if (window_rms(w) > threshold) admitted.push_back({w, origin});
  }
  return admitted;
}

double calibrate_threshold(const AudioClip& silence, double percentile) {
  if (!(percentile >= 0.0 && percentile <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "percentile must lie in [0, 1]");
  const FrameSequence frames = frame_signal(silence);
  std::vector<double> rms;
  for (Eigen::Index origin = 0; origin < frames.count(); origin += kWindowFrames)
    rms.push_back(window_rms(window_at(frames, origin)));
  if (rms.empty()) throw Error(ErrorCode::EmptyAudio, "silence recording has no frames");
  std::sort(rms.begin(), rms.end());
  // Linear interpolation between closest ranks.
  const double pos = percentile * static_cast<double>(rms.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, rms.size() - 1);
  return rms[lo] + (pos - lo) * (rms[hi] - rms[lo]);
}

Eigen::VectorXd hann_window(int length) {
  Eigen::VectorXd w(length);
  for (int n = 0; n < length; ++n) w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / length);
  return w;
}

std::vector<std::complex<double>> real_fft(std::span<const double> x) {
  thread_local Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, std::vector<double>(x.begin(), x.end()));
  return spectrum;
}

SegmentMatrix stft_segment(const WindowMatrix& window) {
  static const Eigen::VectorXd hann = hann_window(kFrameSize);
  SegmentMatrix out;
  std::vector<double> buf(kFftSize, 0.0);
  for (int f = 0; f < kWindowFrames; ++f) {
    for (int n = 0; n < kFrameSize; ++n) buf[n] = hann[n] * window(n, f);
    const auto spectrum = real_fft(buf);
    for (int k = 0; k < kSpectralBins; ++k)
      out(k, f) = static_cast<float>(std::log1p(std::abs(spectrum[k]) / kLogCompressionEpsilon));
  }
  return out;
}

Eigen::Index segment_count(Eigen::Index n_frames, int hop) {
  if (hop <= 0) throw Error(ErrorCode::InvalidArgument, "hop must be positive");
  if (n_frames <= kWindowFrames) return 1;
  return (n_frames - kWindowFrames + hop - 1) / hop + 1;
}

std::vector<AudioWindow> event_windows(const FrameSequence& frames, int hop) {
  const Eigen::Index n = segment_count(frames.count(), hop);
  std::vector<AudioWindow> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.push_back({window_at(frames, i * hop), i * hop});
  return out;
}

std::vector<SpectralSegment> segment_event(const FrameSequence& frames, int hop) {
  std::vector<SpectralSegment> out;
  for (const auto& w : event_windows(frames, hop)) out.push_back({stft_segment(w.samples), w.origin_frame});
  return out;
}

Eigen::VectorXf flatten_segment(const SegmentMatrix& s) {
  Eigen::VectorXf v(kSegmentSize);
  Eigen::Map<Eigen::Matrix<float, kSpectralBins, kWindowFrames, Eigen::RowMajor>>(v.data()) = s;
  return v;
}

SegmentMatrix unflatten_segment(const Eigen::Ref<const Eigen::VectorXf>& v) {
  if (v.size() != kSegmentSize) throw Error(ErrorCode::ShapeMismatch, "segment vector must have 1024 entries");
  return Eigen::Map<const Eigen::Matrix<float, kSpectralBins, kWindowFrames, Eigen::RowMajor>>(v.data());
}

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXf& m) {
  if (m.rows() > 0xFFFF || m.cols() > 0xFFFF)
    throw Error(ErrorCode::ShapeMismatch, "matrix too large for DCSG header");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  auto put = [&](std::uint32_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  out.write("DCSG", 4);
  put(static_cast<std::uint32_t>(m.rows()), 2);
  put(static_cast<std::uint32_t>(m.cols()), 2);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put(std::bit_cast<std::uint32_t>(m(r, c)), 4);
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

Eigen::MatrixXf read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  const std::vector<unsigned char> b{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (b.size() < 8) throw Error(ErrorCode::TruncatedFile, path.string());
  if (!std::equal(b.begin(), b.begin() + 4, "DCSG")) throw Error(ErrorCode::BadMagic, path.string());
  const Eigen::Index rows = b[4] | (b[5] << 8);
  const Eigen::Index cols = b[6] | (b[7] << 8);
  if (b.size() != 8 + static_cast<std::size_t>(rows * cols) * 4) throw Error(ErrorCode::TruncatedFile, path.string());
  Eigen::MatrixXf m(rows, cols);
  std::size_t at = 8;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c, at += 4)
      m(r, c) = std::bit_cast<float>(static_cast<std::uint32_t>(b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) |
                                                                (static_cast<std::uint32_t>(b[at + 3]) << 24)));
  return m;
}

}  // namespace deepcough

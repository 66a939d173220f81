#include <cmath>
#include <complex>
#include <numbers>

#include "deepcough/dsp.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace deepcough;
using test_support::error_code_of;
using test_support::TempDir;

namespace {

constexpr double kPi = std::numbers::pi;

AudioClip clip_of(const Eigen::VectorXf& samples, int rate = kPipelineRate) {
  AudioClip c;
  c.samples = samples;
  c.sample_rate = rate;
  return c;
}

// Straight-line restatement of the segment transform for one frame.
std::vector<double> oracle_column(const std::vector<double>& frame) {
  std::vector<double> padded(kFftSize, 0.0);
  for (int i = 0; i < kFrameSize; ++i)
    padded[static_cast<std::size_t>(i)] = frame[static_cast<std::size_t>(i)] * (0.5 - 0.5 * std::cos(2.0 * kPi * i / kFrameSize));
  const auto spec = oracles::direct_dft(padded);
  std::vector<double> col(kSpectralBins);
  for (int k = 0; k < kSpectralBins; ++k)
    col[static_cast<std::size_t>(k)] = std::log1p(std::abs(spec[static_cast<std::size_t>(k)]) / kLogCompressionEpsilon);
  return col;
}

}  // namespace

TEST_CASE("framing pads the last frame") {
  CHECK(frame_signal(clip_of(Eigen::VectorXf::Ones(1024))).count() == 16);
  const FrameSequence f = frame_signal(clip_of(Eigen::VectorXf::Ones(1000)));
  REQUIRE(f.count() == 16);
  CHECK(f.frames.col(15).head(40).isOnes());
  CHECK(f.frames.col(15).tail(24).isZero());
  CHECK(error_code_of([] { frame_signal(clip_of(Eigen::VectorXf::Ones(64), 44100)); }) == ErrorCode::WrongSampleRate);
}

TEST_CASE("window rms") {
  CHECK(window_rms(WindowMatrix::Constant(0.5f)) == doctest::Approx(0.5));
  CHECK(window_rms(WindowMatrix::Zero()) == 0.0);
  WindowMatrix w;
  // 1024 samples hold exactly 16 periods of a 64-sample sinusoid.
  for (int i = 0; i < kWindowSamples; ++i) w.data()[i] = static_cast<float>(std::sin(2.0 * kPi * i / 64.0));
  CHECK(std::abs(window_rms(w) - 1.0 / std::sqrt(2.0)) < 1e-6);
}

TEST_CASE("admission") {
  CHECK(admit_windows(frame_signal(clip_of(Eigen::VectorXf::Zero(4096))), 0.01).empty());

  Rng rng(1);
  Eigen::VectorXf noise(3000);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = static_cast<float>(rng.uniform(-0.001, 0.001));
  CHECK(admit_windows(frame_signal(clip_of(noise)), 0.0).size() == 3);

  Eigen::VectorXf x = Eigen::VectorXf::Zero(2048);
  x.tail(1024).setConstant(0.5f);
  const auto w = admit_windows(frame_signal(clip_of(x)), 0.01);
  REQUIRE(w.size() == 1);
  CHECK(w[0].origin_frame == 16);
}

TEST_CASE("admission is monotone in the threshold") {
  const Eigen::VectorXf x = Eigen::VectorXf::Random(16000) * 0.05f;
  const FrameSequence f = frame_signal(clip_of(x));
  std::size_t prev = admit_windows(f, 0.0).size();
  for (double t : {0.01, 0.02, 0.025, 0.028, 0.03, 0.05}) {
    const auto w = admit_windows(f, t);
    CHECK(w.size() <= prev);
    for (const auto& a : w) CHECK(a.origin_frame % kWindowFrames == 0);
    prev = w.size();
  }
}

TEST_CASE("threshold calibration takes a percentile of silence rms") {
  Eigen::VectorXf x = Eigen::VectorXf::Zero(1024 * 20);
  for (int w = 0; w < 20; ++w) x.segment(1024 * w, 1024).setConstant(0.001f * static_cast<float>(w + 1));
  const double t = calibrate_threshold(clip_of(x), 0.95);
  CHECK(t > 0.019);
  CHECK(t <= 0.020 + 1e-9);
}

TEST_CASE("fft agrees with a direct dft and satisfies parseval") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(kFftSize);
    for (auto& v : x) v = rng.normal();
    const auto fast = real_fft(x);
    const auto slow = oracles::direct_dft(x);
    REQUIRE(fast.size() == x.size());
    double time_energy = 0.0, spec_energy = 0.0, worst = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      time_energy += x[k] * x[k];
      spec_energy += std::norm(fast[k]);
      worst = std::max(worst, std::abs(fast[k] - slow[k]));
    }
    CHECK(worst < 1e-9);
    CHECK(std::abs(time_energy - spec_energy / kFftSize) <= 1e-9 * time_energy);
  }
}

TEST_CASE("periodic hann") {
  const Eigen::VectorXd w = hann_window(64);
  CHECK(w[0] == 0.0);
  CHECK(w[32] == doctest::Approx(1.0));
  CHECK(w[16] == doctest::Approx(w[48]));
}

TEST_CASE("stft segment matches the straight-line oracle") {
  Rng rng(3);
  WindowMatrix w;
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  const SegmentMatrix s = stft_segment(w);
  for (int f = 0; f < kWindowFrames; ++f) {
    std::vector<double> frame(kFrameSize);
    for (int i = 0; i < kFrameSize; ++i) frame[static_cast<std::size_t>(i)] = w(i, f);
    const auto col = oracle_column(frame);
    for (int k = 0; k < kSpectralBins; ++k) CHECK(s(k, f) == doctest::Approx(col[static_cast<std::size_t>(k)]).epsilon(1e-6));
  }
  CHECK((s.array() >= 0.0f).all());
  CHECK(stft_segment(WindowMatrix::Zero()).isZero());
}

TEST_CASE("a 1 kHz tone peaks at bin 8") {
  WindowMatrix w;
  for (int i = 0; i < kWindowSamples; ++i)
    w.data()[i] = static_cast<float>(0.5 * std::sin(2.0 * kPi * 1000.0 * i / kPipelineRate));
  const SegmentMatrix s = stft_segment(w);
  for (int f = 0; f < kWindowFrames; ++f) {
    Eigen::Index arg;
    s.col(f).maxCoeff(&arg);
    CHECK(arg == 8);
  }
}

TEST_CASE("event segmentation enumerates sliding windows") {
  CHECK(segment_count(16, kAugmentHop) == 1);
  CHECK(segment_count(28, kAugmentHop) == 2);
  CHECK(segment_count(32, kWindowFrames) == 2);
  for (Eigen::Index n = 16; n < 80; ++n)
    for (int overlap = 0; overlap < 8; ++overlap) {
      const int hop = kWindowFrames - overlap;
      // Brute force: origins 0, hop, ... until a window reaches the end.
      Eigen::Index count = 0;
      for (Eigen::Index o = 0;; o += hop) {
        ++count;
        if (o + kWindowFrames >= n) break;
      }
      CHECK(segment_count(n, hop) == count);
    }

  const FrameSequence f = frame_signal(clip_of(Eigen::VectorXf::Constant(28 * kFrameSize, 0.3f)));
  const auto segs = segment_event(f, kAugmentHop);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].origin_frame == 0);
  CHECK(segs[1].origin_frame == 12);

  const FrameSequence g = frame_signal(clip_of(Eigen::VectorXf::Constant(32 * kFrameSize, 0.3f)));
  const auto disjoint = segment_event(g, kWindowFrames);
  REQUIRE(disjoint.size() == 2);
  CHECK(disjoint[1].origin_frame == 16);
}

TEST_CASE("flattening is row-major and invertible") {
  SegmentMatrix s;
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = static_cast<float>(i);
  const Eigen::VectorXf v = flatten_segment(s);
  CHECK(v[1] == s(0, 1));
  CHECK(v[16] == s(1, 0));
  CHECK(unflatten_segment(v) == s);
}

TEST_CASE("matrix dump round-trips") {
  TempDir dir;
  const Eigen::MatrixXf m = Eigen::MatrixXf::Random(5, 7);
  write_matrix(dir / "m.dcsg", m);
  CHECK(read_matrix(dir / "m.dcsg") == m);
  CHECK(std::filesystem::file_size(dir / "m.dcsg") == 8 + 35 * 4);
}

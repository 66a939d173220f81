#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>

#include "deepcough/audio_io.hpp"
#include "support.hpp"

using namespace deepcough;
using test_support::error_code_of;
using test_support::TempDir;

namespace {

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xFF));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void tag(std::vector<std::uint8_t>& b, const char* t) { b.insert(b.end(), t, t + 4); }

std::vector<std::uint8_t> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                                    std::uint16_t bits, const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> b;
  tag(b, "RIFF");
  put32(b, static_cast<std::uint32_t>(36 + data.size()));
  tag(b, "WAVE");
  tag(b, "fmt ");
  put32(b, 16);
  put16(b, format);
  put16(b, channels);
  put32(b, rate);
  put32(b, rate * channels * bits / 8);
  put16(b, static_cast<std::uint16_t>(channels * bits / 8));
  put16(b, bits);
  tag(b, "data");
  put32(b, static_cast<std::uint32_t>(data.size()));
  b.insert(b.end(), data.begin(), data.end());
  return b;
}

std::vector<std::uint8_t> pcm16(std::initializer_list<std::int16_t> values) {
  std::vector<std::uint8_t> d;
  for (auto v : values) put16(d, static_cast<std::uint16_t>(v));
  return d;
}

std::vector<std::uint8_t> f32le(std::initializer_list<float> values) {
  std::vector<std::uint8_t> d;
  for (float v : values) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put32(d, u);
  }
  return d;
}

bool same_samples(const AudioClip& a, const AudioClip& b) {
  return a.samples.size() == b.samples.size() &&
         std::memcmp(a.samples.data(), b.samples.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(7), b(7), c(7, 1);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  Rng u(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.below(5) < 5u);
  }
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  Rng(11).shuffle(v);
  std::multiset<int> s(v.begin(), v.end());
  CHECK(s == std::multiset<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("labels parse and print") {
  CHECK(parse_label("Cough") == Label::Cough);
  CHECK(parse_label("speech") == Label::Speech);
  CHECK(to_string(Label::Cough) == "Cough");
  CHECK(error_code_of([] { parse_label("noise"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("pcm16 mono decodes to full-scale floats") {
  const AudioClip c = decode_wav(wav_bytes(1, 1, 16000, 16, pcm16({0, 16384, -32768})));
  REQUIRE(c.size() == 3);
  CHECK(c.samples[0] == 0.0f);
  CHECK(c.samples[1] == 0.5f);
  CHECK(c.samples[2] == -1.0f);
  CHECK(c.sample_rate == 16000);
}

TEST_CASE("stereo is averaged to mono") {
  const AudioClip c = decode_wav(wav_bytes(3, 2, 44100, 32, f32le({1.0f, 0.0f})));
  REQUIRE(c.size() == 1);
  CHECK(c.samples[0] == 0.5f);
}

TEST_CASE("malformed and unsupported wav files are rejected") {
  auto good = wav_bytes(1, 1, 16000, 16, pcm16({1, 2, 3, 4}));
  auto truncated = good;
  truncated.resize(truncated.size() - 3);
  CHECK(error_code_of([&] { decode_wav(truncated); }) == ErrorCode::MalformedHeader);
  auto bad_riff = good;
  bad_riff[0] = 'X';
  CHECK(error_code_of([&] { decode_wav(bad_riff); }) == ErrorCode::MalformedHeader);
  CHECK(error_code_of([] { decode_wav(wav_bytes(6, 1, 8000, 8, {1, 2})); }) == ErrorCode::UnsupportedEncoding);
  CHECK(error_code_of([] { decode_wav(wav_bytes(1, 1, 16000, 16, {})); }) == ErrorCode::EmptyAudio);
}

TEST_CASE("float wav round-trips exactly") {
  TempDir dir;
  AudioClip c;
  c.sample_rate = 16000;
  c.samples = Eigen::VectorXf::LinSpaced(257, -1.0f, 1.0f);
  save_wav(dir / "x.wav", c);
  const AudioClip back = load_wav(dir / "x.wav");
  CHECK(same_samples(c, back));
  CHECK(back.source_id == "x");
  CHECK(error_code_of([&] { load_wav(dir / "missing.wav"); }) == ErrorCode::Io);
}

TEST_CASE("resample: identity, length and a 100 Hz tone") {
  AudioClip c;
  c.sample_rate = kSourceRate;
  c.samples.resize(kSourceRate);
  for (Eigen::Index i = 0; i < c.size(); ++i)
    c.samples[i] = static_cast<float>(0.5 * std::sin(2.0 * std::numbers::pi * 100.0 * static_cast<double>(i) / kSourceRate));

  CHECK(same_samples(resample(c, kSourceRate), c));

  const AudioClip r = resample(c, kPipelineRate);
  CHECK(r.sample_rate == kPipelineRate);
  CHECK(r.size() == 16000);

  // Pearson correlation with the analytic tone, away from the edges.
  double sxy = 0, sxx = 0, syy = 0, mx = 0, my = 0;
  const Eigen::Index lo = 200, hi = r.size() - 200;
  std::vector<double> ref;
  for (Eigen::Index i = lo; i < hi; ++i) {
    const double y = 0.5 * std::sin(2.0 * std::numbers::pi * 100.0 * static_cast<double>(i) / kPipelineRate);
    mx += r.samples[i];
    my += y;
    ref.push_back(y);
  }
  const double n = static_cast<double>(hi - lo);
  mx /= n;
  my /= n;
  for (Eigen::Index i = lo; i < hi; ++i) {
    const double x = r.samples[i] - mx, y = ref[static_cast<std::size_t>(i - lo)] - my;
    sxy += x * y;
    sxx += x * x;
    syy += y * y;
  }
  CHECK(sxy / std::sqrt(sxx * syy) > 0.999);
}

TEST_CASE("resampled duration is within one sample") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    AudioClip c;
    c.sample_rate = kSourceRate;
    c.samples = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(100 + rng.below(5000)));
    const AudioClip r = resample(c, kPipelineRate);
    const double exact = static_cast<double>(c.size()) * kPipelineRate / kSourceRate;
    CHECK(std::abs(static_cast<double>(r.size()) - exact) <= 1.0);
  }
}

TEST_CASE("synthetic corpus is deterministic, balanced and in range") {
  const Dataset a = synth_corpus(10, 7), b = synth_corpus(10, 7);
  REQUIRE(a.clips.size() == 20);
  CHECK(a.count(Label::Cough) == 10);
  CHECK(a.count(Label::Speech) == 10);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.clips.size(); ++i) {
    CHECK(same_samples(a.clips[i], b.clips[i]));
    CHECK(a.clips[i].source_id == b.clips[i].source_id);
    CHECK(a.clips[i].duration_ms() >= kMinEventMs);
    CHECK(a.clips[i].duration_ms() <= kMaxEventMs);
    CHECK(a.clips[i].samples.cwiseAbs().maxCoeff() <= 1.0f);
    CHECK(a.clips[i].samples.allFinite());
    ids.insert(a.clips[i].source_id);
  }
  CHECK(ids.size() == 20);
  // Clip i depends only on (seed, class, i).
  const Dataset small = synth_corpus(3, 7);
  CHECK(same_samples(small.clips[0], a.clips[0]));
}

TEST_CASE("mean synthetic duration sits near the uniform mean") {
  const Dataset ds = synth_corpus(500, 42);
  double sum = 0.0;
  for (const auto& c : ds.clips) sum += c.duration_ms();
  const double mean = sum / static_cast<double>(ds.clips.size());
  CHECK(mean >= 450.0);
  CHECK(mean <= 600.0);
}

TEST_CASE("split sizes follow 70/30 then 80:20") {
  const Dataset ds = synth_corpus(50, 1);
  const DatasetSplit s = split_dataset(ds, kTestFraction, kValFractionOfBuild, 9);
  CHECK(s.test.clips.size() == 30);
  CHECK(s.val.clips.size() == 14);
  CHECK(s.train.clips.size() == 56);

  const DatasetSplit again = split_dataset(ds, kTestFraction, kValFractionOfBuild, 9);
  for (std::size_t i = 0; i < s.test.clips.size(); ++i) CHECK(s.test.clips[i].source_id == again.test.clips[i].source_id);
}

TEST_CASE("split partitions the sources") {
  Dataset ds = synth_corpus(20, 3);
  // Give pairs of clips a shared source so grouping matters.
  for (std::size_t i = 0; i + 1 < ds.clips.size(); i += 2) ds.clips[i + 1].source_id = ds.clips[i].source_id;
  const DatasetSplit s = split_dataset(ds, kTestFraction, kValFractionOfBuild, 4);
  std::set<std::string> tr, va, te;
  for (const auto& c : s.train.clips) tr.insert(c.source_id);
  for (const auto& c : s.val.clips) va.insert(c.source_id);
  for (const auto& c : s.test.clips) te.insert(c.source_id);
  for (const auto& id : tr) {
    CHECK(va.count(id) == 0);
    CHECK(te.count(id) == 0);
  }
  for (const auto& id : va) CHECK(te.count(id) == 0);
  CHECK(s.train.clips.size() + s.val.clips.size() + s.test.clips.size() == ds.clips.size());
}

TEST_CASE("two clips cannot be split three ways") {
  const Dataset ds = synth_corpus(1, 1);
  CHECK(error_code_of([&] { split_dataset(ds); }) == ErrorCode::InsufficientData);
}

TEST_CASE("corpus round-trips through disk") {
  TempDir dir;
  const Dataset ds = synth_corpus(4, 2);
  const auto entries = write_corpus(ds, dir.path());
  CHECK(entries.size() == 8);
  const Dataset back = read_corpus(dir.path());
  REQUIRE(back.clips.size() == ds.clips.size());
  for (std::size_t i = 0; i < ds.clips.size(); ++i) {
    CHECK(same_samples(back.clips[i], ds.clips[i]));
    CHECK(back.clips[i].label == ds.clips[i].label);
    CHECK(back.clips[i].source_id == ds.clips[i].source_id);
  }
  CHECK(error_code_of([&] { read_corpus(dir / "nowhere"); }) == ErrorCode::Io);
}

#include "deepcough/audio_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace deepcough {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace

std::size_t Dataset::count(Label l) const {
  return static_cast<std::size_t>(
      std::count_if(clips.begin(), clips.end(), [l](const AudioClip& c) { return c.label == l; }));
}

AudioClip decode_wav(std::span<const std::uint8_t> b) {
  if (b.size() < 12 || !tag_is(b, 0, "RIFF") || !tag_is(b, 8, "WAVE"))
    throw Error(ErrorCode::MalformedHeader, "missing RIFF/WAVE preamble");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t size = read_u32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (size > b.size() - body) throw Error(ErrorCode::MalformedHeader, "chunk runs past end of file");
    if (tag_is(b, pos, "fmt ")) {
      if (size < 16) throw Error(ErrorCode::MalformedHeader, "fmt chunk too small");
      format = read_u16(b, body);
      channels = read_u16(b, body + 2);
      rate = read_u32(b, body + 4);
      bits = read_u16(b, body + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw Error(ErrorCode::MalformedHeader, "extensible fmt chunk too small");
        format = read_u16(b, body + 24);
      }
      have_fmt = true;
    } else if (tag_is(b, pos, "data")) {
      data = b.subspan(body, size);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || !have_data) throw Error(ErrorCode::MalformedHeader, "missing fmt or data chunk");
  if (channels == 0 || rate == 0) throw Error(ErrorCode::MalformedHeader, "zero channels or rate");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32)
    throw Error(ErrorCode::UnsupportedEncoding,
                "format " + std::to_string(format) + " with " + std::to_string(bits) + " bits");

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t n = data.size() / frame_bytes;
  if (n == 0) throw Error(ErrorCode::EmptyAudio, "no sample frames");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t at = i * frame_bytes + c * (bits / 8);
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(data, at)) / 32768.0;
      } else {
        const float v = std::bit_cast<float>(read_u32(data, at));
        if (!std::isfinite(v)) throw Error(ErrorCode::UnsupportedEncoding, "non-finite float sample");
        acc += v;
      }
    }
    clip.samples[static_cast<Eigen::Index>(i)] =
        static_cast<float>(std::clamp(acc / channels, -1.0, 1.0));
  }
  return clip;
}

AudioClip load_wav(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  AudioClip clip = decode_wav(bytes);
  clip.source_id = path.stem().string();
  return clip;
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_bytes = n * 4;
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 4);
  put_u16(out, 4);
  put_u16(out, 32);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (std::uint32_t i = 0; i < n; ++i) put_u32(out, std::bit_cast<std::uint32_t>(clip.samples[i]));
  return out;
}

void save_wav(const std::filesystem::path& path, const AudioClip& clip) { write_file(path, encode_wav(clip)); }

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw Error(ErrorCode::InvalidArgument, "target rate must be positive");
  if (clip.sample_rate <= 0) throw Error(ErrorCode::InvalidArgument, "source rate must be positive");
  if (target_rate == clip.sample_rate) return clip;

  const double ratio = static_cast<double>(clip.sample_rate) / target_rate;
  const double cutoff = 0.5 * std::min(1.0, 1.0 / ratio);  // cycles per input sample

  std::array<double, kResampleTaps> taps{};
  double sum = 0.0;
  constexpr double centre = (kResampleTaps - 1) / 2.0;
  for (int k = 0; k < kResampleTaps; ++k) {
    const double t = k - centre;
    const double x = 2.0 * std::numbers::pi * cutoff * t;
    const double sinc = 2.0 * cutoff * (std::abs(x) < 1e-12 ? 1.0 : std::sin(x) / x);
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (k + 0.5) / kResampleTaps);
    taps[k] = sinc * hann;
    sum += taps[k];
  }
  for (double& t : taps) t /= sum;

  const Eigen::Index n_in = clip.samples.size();
  // filtered(m) is the low-passed signal at input time m - centre.
  auto filtered = [&](Eigen::Index m) {
    double acc = 0.0;
    for (int k = 0; k < kResampleTaps; ++k) {
      const Eigen::Index idx = m - k;
      if (idx >= 0 && idx < n_in) acc += taps[k] * clip.samples[idx];
    }
    return acc;
  };

  const auto n_out = static_cast<Eigen::Index>(
      std::llround(static_cast<double>(n_in) * target_rate / clip.sample_rate));
  AudioClip out = clip;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (Eigen::Index i = 0; i < n_out; ++i) {
    const double pos = i * ratio + centre;
    const auto m0 = static_cast<Eigen::Index>(std::floor(pos));
    const double frac = pos - m0;
    const double v = (1.0 - frac) * filtered(m0) + frac * filtered(m0 + 1);
    out.samples[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return out;
}

namespace {

constexpr double kNoiseFloor = 1e-3;

void fill_cough(AudioClip& clip, Rng& rng) {
  const Eigen::Index n = clip.samples.size();
  const double fs = clip.sample_rate;
  const double attack_s = rng.uniform(0.005, 0.020);
  const double tau_s = rng.uniform(0.06, 0.15);
  const double peak = rng.uniform(0.4, 0.9);
  // One-pole colouring keeps the burst broadband with a random tilt.
  const double pole = rng.uniform(0.0, 0.6);
  // Some coughs have a weaker second burst, as in the intermediate phase.
  const bool second = rng.uniform() < 0.5;
  const double second_at = rng.uniform(0.15, 0.3);
  const double second_gain = rng.uniform(0.3, 0.6);

  Eigen::VectorXd burst(n);
  double state = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    state = (1.0 - pole) * rng.normal() + pole * state;
    const double t = i / fs;
    double env = t < attack_s ? t / attack_s : std::exp(-(t - attack_s) / tau_s);
    if (second && t >= second_at) env += second_gain * std::exp(-(t - second_at) / tau_s);
    burst[i] = env * state;
  }
  const double max_abs = burst.cwiseAbs().maxCoeff();
  burst *= peak / std::max(max_abs, 1e-12);
  for (Eigen::Index i = 0; i < n; ++i)
    clip.samples[i] = static_cast<float>(std::clamp(burst[i] + kNoiseFloor * rng.normal(), -1.0, 1.0));
}

void fill_speech(AudioClip& clip, Rng& rng) {
  const Eigen::Index n = clip.samples.size();
  const double fs = clip.sample_rate;
  const double f0 = rng.uniform(100.0, 300.0);
  const int harmonics = 3 + static_cast<int>(rng.below(3));
  const double am_rate = rng.uniform(2.0, 6.0);
  const double am_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double vibrato_rate = rng.uniform(3.0, 6.0);
  const double vibrato_depth = rng.uniform(0.0, 0.03);
  const double peak = rng.uniform(0.3, 0.7);
  std::vector<double> gains(harmonics), phases(harmonics);
  for (int h = 0; h < harmonics; ++h) {
    gains[h] = rng.uniform(0.5, 1.0) / (h + 1);
    phases[h] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const double fade = 0.02 * fs;

  Eigen::VectorXd tone(n);
  double phase = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = i / fs;
    const double f = f0 * (1.0 + vibrato_depth * std::sin(2.0 * std::numbers::pi * vibrato_rate * t));
    phase += 2.0 * std::numbers::pi * f / fs;
    double v = 0.0;
    for (int h = 0; h < harmonics; ++h) v += gains[h] * std::sin((h + 1) * phase + phases[h]);
    const double am = 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * am_rate * t + am_phase);
    const double edge = std::min({1.0, (i + 1) / fade, (n - i) / fade});
    tone[i] = am * edge * v;
  }
  const double max_abs = tone.cwiseAbs().maxCoeff();
  tone *= peak / std::max(max_abs, 1e-12);
  for (Eigen::Index i = 0; i < n; ++i)
    clip.samples[i] = static_cast<float>(std::clamp(tone[i] + kNoiseFloor * rng.normal(), -1.0, 1.0));
}

std::string make_source_id(Label l, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05zu", l == Label::Cough ? "cough" : "speech", i);
  return buf;
}

}  // namespace

Dataset synth_corpus(std::size_t n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw Error(ErrorCode::InvalidArgument, "n_per_class must be >= 1");
  Dataset ds;
  ds.seed = seed;
  ds.clips.reserve(2 * n_per_class);
  const Rng root(seed);
  for (Label label : {Label::Cough, Label::Speech}) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Rng rng = root.split(static_cast<std::uint64_t>(class_index(label)) << 32 | i);
      AudioClip clip;
      clip.sample_rate = kPipelineRate;
      clip.label = label;
      clip.source_id = make_source_id(label, i);
      const double dur_ms = rng.uniform(kMinEventMs, kMaxEventMs);
      clip.samples.resize(static_cast<Eigen::Index>(std::llround(dur_ms * kPipelineRate / 1000.0)));
      if (label == Label::Cough)
        fill_cough(clip, rng);
      else
        fill_speech(clip, rng);
      ds.clips.push_back(std::move(clip));
    }
  }
  return ds;
}

DatasetSplit split_dataset(const Dataset& ds, double test_frac, double val_frac_of_build,
                           std::uint64_t seed) {
  if (ds.empty()) throw Error(ErrorCode::InsufficientData, "empty dataset");
  if (!(test_frac > 0.0 && test_frac < 1.0) || !(val_frac_of_build > 0.0 && val_frac_of_build < 1.0))
    throw Error(ErrorCode::InvalidArgument, "split fractions must lie in (0, 1)");

  // Groups in first-appearance order.
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.clips.size(); ++i) {
    const auto& c = ds.clips[i];
    if (!c.label) throw Error(ErrorCode::InvalidArgument, "clip " + c.source_id + " has no label");
    auto [it, inserted] = groups.try_emplace(c.source_id);
    if (inserted) group_order.push_back(c.source_id);
    it->second.push_back(i);
  }

  enum Part : std::uint8_t { kTrain, kVal, kTest };
  std::vector<Part> assignment(ds.clips.size(), kTrain);
  const Rng root(seed);

  for (Label label : {Label::Cough, Label::Speech}) {
    std::vector<const std::vector<std::size_t>*> members;
    std::size_t n_clips = 0;
    for (const auto& id : group_order) {
      const auto& idx = groups.at(id);
      if (ds.clips[idx.front()].label == label) {
        members.push_back(&idx);
        n_clips += idx.size();
      }
    }
    Rng rng = root.split(static_cast<std::uint64_t>(class_index(label)));
    rng.shuffle(members);

    const auto test_target = static_cast<std::size_t>(std::lround(test_frac * n_clips));
    const auto val_target = static_cast<std::size_t>(std::lround(val_frac_of_build * (n_clips - test_target)));
    std::size_t n_test = 0, n_val = 0;
    for (const auto* g : members) {
      Part part = kTrain;
      if (n_test < test_target) {
        part = kTest;
        n_test += g->size();
      } else if (n_val < val_target) {
        part = kVal;
        n_val += g->size();
      }
      for (std::size_t i : *g) assignment[i] = part;
    }
  }

  DatasetSplit out;
  out.train.seed = out.val.seed = out.test.seed = ds.seed;
  for (std::size_t i = 0; i < ds.clips.size(); ++i) {
    Dataset& dst = assignment[i] == kTest ? out.test : assignment[i] == kVal ? out.val : out.train;
    dst.clips.push_back(ds.clips[i]);
  }
  if (out.train.empty() || out.val.empty() || out.test.empty())
    throw Error(ErrorCode::InsufficientData,
                "split of " + std::to_string(ds.clips.size()) + " clips leaves an empty partition");
  return out;
}

std::vector<ManifestEntry> write_corpus(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());

  std::vector<ManifestEntry> entries;
  std::ostringstream manifest;
  manifest << "# path\tlabel\tsource_id\tduration_ms\n";
  for (const auto& clip : ds.clips) {
    if (!clip.label) throw Error(ErrorCode::InvalidArgument, "clip " + clip.source_id + " has no label");
    ManifestEntry e{clip.source_id + ".wav", *clip.label, clip.source_id, clip.duration_ms()};
    save_wav(dir / e.path, clip);
    char dur[32];
    std::snprintf(dur, sizeof dur, "%.3f", e.duration_ms);
    manifest << e.path << '\t' << to_string(e.label) << '\t' << e.source_id << '\t' << dur << '\n';
    entries.push_back(std::move(e));
  }
  const std::string text = manifest.str();
  write_file(dir / kManifestName,
             std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return entries;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "missing manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::string p, label, id, dur;
    if (!std::getline(fields, p, '\t') || !std::getline(fields, label, '\t') ||
        !std::getline(fields, id, '\t') || !std::getline(fields, dur))
      throw Error(ErrorCode::MalformedHeader,
                  path.string() + ":" + std::to_string(line_no) + ": expected 4 tab-separated fields");
    entries.push_back({p, parse_label(label), id, std::stod(dur)});
  }
  return entries;
}

Dataset read_corpus(const std::filesystem::path& dir) {
  Dataset ds;
  for (const auto& e : read_manifest(dir)) {
    AudioClip clip = load_wav(dir / e.path);
    clip.label = e.label;
    clip.source_id = e.source_id;
    ds.clips.push_back(std::move(clip));
  }
  return ds;
}

}  // namespace deepcough

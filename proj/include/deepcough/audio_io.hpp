#ifndef DEEPCOUGH_AUDIO_IO_HPP
#define DEEPCOUGH_AUDIO_IO_HPP

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepcough/common.hpp"

namespace deepcough {

inline constexpr int kSourceRate = 44100;
inline constexpr int kPipelineRate = 16000;

struct AudioClip {
  Eigen::VectorXf samples;
  int sample_rate = kPipelineRate;
  std::optional<Label> label;
  // Event identity; clips sharing a source_id always land in the same split.
  std::string source_id;

  Eigen::Index size() const { return samples.size(); }
  double duration_ms() const { return 1000.0 * static_cast<double>(samples.size()) / sample_rate; }
};

struct Dataset {
  std::vector<AudioClip> clips;
  std::uint64_t seed = 0;

  std::size_t count(Label l) const;
  bool empty() const { return clips.empty(); }
};

// PCM16 or IEEE float32, any channel count (averaged to mono).
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
AudioClip load_wav(const std::filesystem::path& path);

// Float32 mono.
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);
void save_wav(const std::filesystem::path& path, const AudioClip& clip);

inline constexpr int kResampleTaps = 64;

// Hann-windowed sinc low-pass (cutoff at the lower Nyquist), then linear
// interpolation of the filtered signal at the output instants.
AudioClip resample(const AudioClip& clip, int target_rate);

inline constexpr double kMinEventMs = 250.0;
inline constexpr double kMaxEventMs = 800.0;

// n_per_class cough-like and n_per_class speech-like clips at 16 kHz.
// Clip i of a class depends only on (seed, class, i).
Dataset synth_corpus(std::size_t n_per_class, std::uint64_t seed);

inline constexpr double kTestFraction = 0.30;
inline constexpr double kValFractionOfBuild = 0.20;

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Stratified by class and grouped by source_id.
DatasetSplit split_dataset(const Dataset& ds, double test_frac = kTestFraction,
                           double val_frac_of_build = kValFractionOfBuild, std::uint64_t seed = 42);

struct ManifestEntry {
  std::string path;  // relative to the manifest directory
  Label label;
  std::string source_id;
  double duration_ms;
};

inline constexpr const char* kManifestName = "manifest.tsv";

std::vector<ManifestEntry> write_corpus(const Dataset& ds, const std::filesystem::path& dir);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);
Dataset read_corpus(const std::filesystem::path& dir);

}  // namespace deepcough

#endif  // DEEPCOUGH_AUDIO_IO_HPP

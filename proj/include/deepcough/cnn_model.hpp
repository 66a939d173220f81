#ifndef DEEPCOUGH_CNN_MODEL_HPP
#define DEEPCOUGH_CNN_MODEL_HPP

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "deepcough/audio_io.hpp"
#include "deepcough/dsp.hpp"
#include "deepcough/tensor_nn.hpp"

namespace deepcough {

struct CnnArchitecture {
  Eigen::Index filters = 16;
  Eigen::Index conv1_h = 9, conv1_w = 3;
  Eigen::Index conv2_h = 5, conv2_w = 3;
  Eigen::Index pool_h = 2, pool_w = 1;
  Eigen::Index dense_units = 256;
  double dropout = 0.5;
};

// Same layer chain at 4 filters and 16 dense units, dropout off.
inline CnnArchitecture reduced_architecture() {
  CnnArchitecture a;
  a.filters = 4;
  a.dense_units = 16;
  a.dropout = 0.0;
  return a;
}

// 448 + 3856 + 590080 + 65792 + 514.
inline constexpr Eigen::Index kDeepCoughParameterCount = 660690;
inline constexpr double kStdFloor = 1e-6;

// Conv -> ReLU -> Pool -> Conv -> ReLU -> Pool -> Dense -> ReLU -> Dropout
// -> Dense -> ReLU -> Dropout -> Dense(2). He-normal weights for layers that
// feed a ReLU, LeCun-normal for the output layer, zero biases.
template <typename Scalar>
nn::Network<Scalar> build_network(const CnnArchitecture& arch, std::uint64_t seed);

// Per-cell statistics over the 64x16 training segments.
struct Standardization {
  Eigen::MatrixXf mean;    // 64 x 16
  Eigen::MatrixXf stddev;  // 64 x 16, floored at kStdFloor
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct CnnModel {
  nn::Network<float> network;
  Standardization standardization;
  nn::SgdConfig hyperparams;
  std::vector<EpochRecord> history;
  double compression_epsilon = kLogCompressionEpsilon;
};

CnnModel build_deepcough(std::uint64_t seed, const CnnArchitecture& arch = {});

// Segments drawn from labelled clips, one column per segment.
struct SegmentSet {
  Eigen::MatrixXf spectra;  // 1024 x N, flatten_segment layout
  Eigen::MatrixXf audio;    // 1024 x N raw window samples in time order
  std::vector<Label> labels;
  std::vector<std::size_t> clip_index;
  std::vector<Eigen::Index> origin_frame;

  Eigen::Index size() const { return spectra.cols(); }
  std::vector<int> class_indices() const;
};

// Windows of 16 frames at stride `hop` over each clip, keeping those whose
// RMS exceeds the threshold. A clip with no admitted window contributes its
// loudest one, so every clip is represented.
SegmentSet extract_segments(std::span<const AudioClip> clips, int hop, double threshold);

Standardization standardize_fit(const Eigen::MatrixXf& spectra);
Eigen::MatrixXf standardize_apply(const Eigen::MatrixXf& spectra, const Standardization& stats);
SegmentMatrix standardize_apply(const SegmentMatrix& segment, const Standardization& stats);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch SGD with momentum on already-standardized segments. Returns the
// parameters of the epoch with the best validation accuracy (lower
// validation loss breaks ties). The returned model's standardization is
// left empty.
CnnModel train(const Eigen::MatrixXf& train_x, std::span<const Label> train_y, const Eigen::MatrixXf& val_x,
               std::span<const Label> val_y, const nn::SgdConfig& cfg, const CnnArchitecture& arch = {},
               const EpochCallback& on_epoch = {});

// Fit standardization on train, apply to both, train, and store the stats.
CnnModel fit_deepcough(const SegmentSet& train_set, const SegmentSet& val_set, const nn::SgdConfig& cfg,
                       const CnnArchitecture& arch = {}, const EpochCallback& on_epoch = {});

struct SetMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};
SetMetrics evaluate_standardized(const nn::Network<float>& net, const Eigen::MatrixXf& x,
                                 std::span<const Label> y);

// 2 x N probabilities (row 0 = Cough) for raw, unstandardized spectra.
Eigen::MatrixXf predict_spectra(const CnnModel& model, const Eigen::MatrixXf& raw_spectra);

// {p_cough, p_speech} for a raw segment.
std::array<double, 2> predict_segment(const CnnModel& model, const SegmentMatrix& raw);

struct EventWindow {
  std::vector<SpectralSegment> segments;
  Label true_label = Label::Speech;
};

// Non-overlapping segmentation of one test example.
EventWindow make_event_window(const AudioClip& clip, double threshold);

struct WindowDecision {
  Label label;
  double p_cough;
};

// Mean of the per-segment cough probabilities; exactly 0.5 goes to Speech.
WindowDecision decide_window(std::span<const double> segment_p_cough);
WindowDecision predict_window(const CnnModel& model, const EventWindow& window);

std::vector<std::uint8_t> encode_model(const CnnModel& model);
CnnModel decode_model(std::span<const std::uint8_t> bytes);
void save_model(const CnnModel& model, const std::filesystem::path& path);
CnnModel load_model(const std::filesystem::path& path);

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

}  // namespace deepcough

#endif  // DEEPCOUGH_CNN_MODEL_HPP

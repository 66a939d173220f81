#ifndef DEEPCOUGH_EXPERIMENTS_HPP
#define DEEPCOUGH_EXPERIMENTS_HPP

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "deepcough/audio_io.hpp"
#include "deepcough/baselines.hpp"
#include "deepcough/cnn_model.hpp"
#include "deepcough/eval.hpp"

namespace deepcough {

struct ExperimentOptions {
  std::uint64_t seed = 42;
  double threshold = kDefaultAdmissionThreshold;
  nn::SgdConfig cnn;  // its seed is replaced by `seed`
  SoftmaxConfig softmax;
  SvmConfig svm;  // its seed is replaced by `seed`
  HmmConfig hmm;
  EpochCallback on_epoch;
  std::function<void(const std::string&)> log;
};

// Clips resampled to the pipeline rate and split by class and source.
// Throws OneClassOnly unless both classes are present.
DatasetSplit prepare_split(const Dataset& corpus, std::uint64_t seed);

// Training segments at the augmentation hop, validation and test segments
// at the non-overlapping hop; all gated by the admission threshold.
struct SegmentSplit {
  SegmentSet train;
  SegmentSet val;
  SegmentSet test;
};
SegmentSplit prepare_segments(const DatasetSplit& split, double threshold);

struct Experiment1Result {
  std::vector<EvalReport> rows;  // MFCC+SM, MFCC+SVM, STFT+SVM, STFT+CNN
  CnnModel cnn;
};

// Four models on identical splits, scored per 64 ms test segment.
Experiment1Result run_experiment1(const Dataset& corpus, const ExperimentOptions& opts);

struct Experiment2Result {
  EvalReport cnn;  // mean segment p_cough per test clip
  EvalReport hmm;  // ll_cough - ll_speech per test clip
  BaumWelchTrace cough_trace;
  BaumWelchTrace speech_trace;
};

// One decision per test clip for each model. A trained CNN may be passed in
// to reuse the one from the first experiment; otherwise one is trained.
Experiment2Result run_experiment2(const Dataset& corpus, const ExperimentOptions& opts,
                                  const CnnModel* trained_cnn = nullptr);

// exp1_table.csv, exp2_table.csv, roc_cnn.csv and roc_hmm.csv.
void write_experiment_outputs(const std::filesystem::path& dir, const Experiment1Result& exp1,
                              const Experiment2Result& exp2);

}  // namespace deepcough

#endif  // DEEPCOUGH_EXPERIMENTS_HPP

#include "deepcough/experiments.hpp"

#include <cmath>

namespace deepcough {

namespace {

void say(const ExperimentOptions& opts, const std::string& msg) {
  if (opts.log) opts.log(msg);
}

Dataset at_pipeline_rate(const Dataset& corpus) {
  Dataset out;
  out.seed = corpus.seed;
  out.clips.reserve(corpus.clips.size());
  for (const auto& c : corpus.clips) out.clips.push_back(c.sample_rate == kPipelineRate ? c : resample(c, kPipelineRate));
  return out;
}

std::vector<double> to_double(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

EvalReport linear_report(const std::string& name, const LinearModel& model, const Eigen::MatrixXd& x,
                         std::span<const Label> truth) {
  const auto scores = to_double(model.cough_scores(x));
  const auto predicted = model.predict(x);
  return make_report(name, truth, predicted, scores);
}

CnnModel train_cnn(const SegmentSplit& seg, const ExperimentOptions& opts) {
  nn::SgdConfig cfg = opts.cnn;
  cfg.seed = opts.seed;
  say(opts, "training STFT+CNN on " + std::to_string(seg.train.size()) + " segments");
  return fit_deepcough(seg.train, seg.val, cfg, {}, opts.on_epoch);
}

std::vector<MfccSequence> hmm_sequences(const Dataset& ds, Label label, Eigen::Index min_length) {
  std::vector<MfccSequence> out;
  for (const auto& c : ds.clips) {
    if (c.label != label) continue;
    auto seq = mfcc_sequence(std::span<const float>(c.samples.data(), static_cast<std::size_t>(c.size())), kHmmMfcc);
    if (seq.length() >= min_length) out.push_back(std::move(seq));
  }
  if (out.empty())
    throw Error(ErrorCode::InsufficientData, std::string("no ") + std::string(to_string(label)) + " clip is long enough for the HMM");
  return out;
}

}  // namespace

DatasetSplit prepare_split(const Dataset& corpus, std::uint64_t seed) {
  const std::size_t coughs = corpus.count(Label::Cough), speech = corpus.count(Label::Speech);
  if (coughs == 0 || speech == 0)
    throw Error(ErrorCode::OneClassOnly, "corpus has " + std::to_string(coughs) + " cough and " +
                                             std::to_string(speech) + " speech clips");
  return split_dataset(at_pipeline_rate(corpus), kTestFraction, kValFractionOfBuild, seed);
}

SegmentSplit prepare_segments(const DatasetSplit& split, double threshold) {
  return {extract_segments(split.train.clips, kAugmentHop, threshold),
          extract_segments(split.val.clips, kWindowFrames, threshold),
          extract_segments(split.test.clips, kWindowFrames, threshold)};
}

Experiment1Result run_experiment1(const Dataset& corpus, const ExperimentOptions& opts) {
  const DatasetSplit split = prepare_split(corpus, opts.seed);
  const SegmentSplit seg = prepare_segments(split, opts.threshold);
  say(opts, "segments: " + std::to_string(seg.train.size()) + " train, " + std::to_string(seg.val.size()) + " val, " +
                std::to_string(seg.test.size()) + " test");

  Experiment1Result result;
  const Eigen::MatrixXd mfcc_train = mfcc_features(seg.train), mfcc_test = mfcc_features(seg.test);
  const Eigen::MatrixXd stft_train = stft_features(seg.train), stft_test = stft_features(seg.test);
  SvmConfig svm = opts.svm;
  svm.seed = opts.seed;

  say(opts, "training MFCC+SM");
  result.rows.push_back(linear_report(
      "MFCC+SM", train_softmax(mfcc_train, seg.train.labels, FeatureKind::Mfcc16x13, opts.softmax), mfcc_test,
      seg.test.labels));
  say(opts, "training MFCC+SVM");
  result.rows.push_back(linear_report(
      "MFCC+SVM", train_linear_svm(mfcc_train, seg.train.labels, FeatureKind::Mfcc16x13, svm), mfcc_test,
      seg.test.labels));
  say(opts, "training STFT+SVM");
  result.rows.push_back(linear_report(
      "STFT+SVM", train_linear_svm(stft_train, seg.train.labels, FeatureKind::Stft64x16, svm), stft_test,
      seg.test.labels));

  result.cnn = train_cnn(seg, opts);
  const Eigen::MatrixXf probs = predict_spectra(result.cnn, seg.test.spectra);
  std::vector<double> scores(static_cast<std::size_t>(probs.cols()));
  std::vector<Label> predicted(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) {
    scores[j] = probs(0, static_cast<Eigen::Index>(j));
    predicted[j] = probs(0, static_cast<Eigen::Index>(j)) > probs(1, static_cast<Eigen::Index>(j)) ? Label::Cough
                                                                                                    : Label::Speech;
  }
  result.rows.push_back(make_report("STFT+CNN", seg.test.labels, predicted, scores));
  return result;
}

Experiment2Result run_experiment2(const Dataset& corpus, const ExperimentOptions& opts, const CnnModel* trained_cnn) {
  const DatasetSplit split = prepare_split(corpus, opts.seed);
  CnnModel own;
  if (!trained_cnn) {
    own = train_cnn(prepare_segments(split, opts.threshold), opts);
    trained_cnn = &own;
  }

  const Eigen::Index min_len = hmm_min_length(opts.hmm.n_states);
  say(opts, "training HMMs");
  Experiment2Result result;
  const HmmModel cough_hmm =
      hmm_train(hmm_sequences(split.train, Label::Cough, min_len), opts.hmm, opts.seed, &result.cough_trace);
  const HmmModel speech_hmm = hmm_train(hmm_sequences(split.train, Label::Speech, min_len), opts.hmm,
                                        mix64(opts.seed), &result.speech_trace);

  const std::size_t n = split.test.clips.size();
  std::vector<Label> truth(n), cnn_pred(n), hmm_pred(n);
  std::vector<double> cnn_score(n), hmm_score(n);
  for (std::size_t i = 0; i < n; ++i) {
    const AudioClip& clip = split.test.clips[i];
    truth[i] = *clip.label;
    const WindowDecision w = predict_window(*trained_cnn, make_event_window(clip, opts.threshold));
    cnn_pred[i] = w.label;
    cnn_score[i] = w.p_cough;
    const MfccSequence seq =
        mfcc_sequence(std::span<const float>(clip.samples.data(), static_cast<std::size_t>(clip.size())), kHmmMfcc);
    const HmmDecision h = hmm_classify(cough_hmm, speech_hmm, seq);
    hmm_pred[i] = h.label;
    hmm_score[i] = h.llr;
  }
  result.cnn = make_report("DeepCough", truth, cnn_pred, cnn_score);
  result.hmm = make_report("HMM", truth, hmm_pred, hmm_score);
  return result;
}

void write_experiment_outputs(const std::filesystem::path& dir, const Experiment1Result& exp1,
                              const Experiment2Result& exp2) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  write_table_csv(dir / "exp1_table.csv", exp1.rows);
  const EvalReport rows2[] = {exp2.cnn, exp2.hmm};
  write_table_csv(dir / "exp2_table.csv", rows2, true);
  write_roc_csv(dir / "roc_cnn.csv", exp2.cnn.roc);
  write_roc_csv(dir / "roc_hmm.csv", exp2.hmm.roc);
}

}  // namespace deepcough

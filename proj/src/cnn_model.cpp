#include "deepcough/cnn_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "deepcough/model_file.hpp"

namespace deepcough {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kDropoutStream = 0x4452;
constexpr Eigen::Index kEvalChunk = 256;

template <typename Scalar, typename M>
void fill_normal(M& m, Rng& rng, double stddev) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = static_cast<Scalar>(stddev * rng.normal());
}

}  // namespace

template <typename Scalar>
nn::Network<Scalar> build_network(const CnnArchitecture& arch, std::uint64_t seed) {
  using namespace nn;
  const Rng root(seed);
  Network<Scalar> net;

  Conv2D<Scalar> conv1(Shape3{1, kSpectralBins, kWindowFrames}, arch.filters, arch.conv1_h, arch.conv1_w);
  MaxPool pool1{conv1.output(), arch.pool_h, arch.pool_w};
  Conv2D<Scalar> conv2(pool1.output(), arch.filters, arch.conv2_h, arch.conv2_w);
  MaxPool pool2{conv2.output(), arch.pool_h, arch.pool_w};
  const Index flat = pool2.output().size();
  Dense<Scalar> fc1(flat, arch.dense_units);
  Dense<Scalar> fc2(arch.dense_units, arch.dense_units);
  Dense<Scalar> out(arch.dense_units, 2);

  Rng r1 = root.split(1), r2 = root.split(2), r3 = root.split(3), r4 = root.split(4), r5 = root.split(5);
  fill_normal<Scalar>(conv1.weights, r1, std::sqrt(2.0 / static_cast<double>(conv1.weights.cols())));
  fill_normal<Scalar>(conv2.weights, r2, std::sqrt(2.0 / static_cast<double>(conv2.weights.cols())));
  fill_normal<Scalar>(fc1.weights, r3, std::sqrt(2.0 / static_cast<double>(fc1.inputs())));
  fill_normal<Scalar>(fc2.weights, r4, std::sqrt(2.0 / static_cast<double>(fc2.inputs())));
  fill_normal<Scalar>(out.weights, r5, std::sqrt(1.0 / static_cast<double>(out.inputs())));

  const Index c1 = conv1.output().size();
  const Index c2 = conv2.output().size();
  net.layers.emplace_back(std::move(conv1));
  net.layers.emplace_back(Relu{c1});
  net.layers.emplace_back(pool1);
  net.layers.emplace_back(std::move(conv2));
  net.layers.emplace_back(Relu{c2});
  net.layers.emplace_back(pool2);
  net.layers.emplace_back(std::move(fc1));
  net.layers.emplace_back(Relu{arch.dense_units});
  net.layers.emplace_back(Dropout{arch.dense_units, arch.dropout});
  net.layers.emplace_back(std::move(fc2));
  net.layers.emplace_back(Relu{arch.dense_units});
  net.layers.emplace_back(Dropout{arch.dense_units, arch.dropout});
  net.layers.emplace_back(std::move(out));
  net.validate();
  return net;
}

template nn::Network<float> build_network<float>(const CnnArchitecture&, std::uint64_t);
template nn::Network<double> build_network<double>(const CnnArchitecture&, std::uint64_t);

CnnModel build_deepcough(std::uint64_t seed, const CnnArchitecture& arch) {
  CnnModel model;
  model.network = build_network<float>(arch, seed);
  model.hyperparams.seed = seed;
  model.standardization.mean = Eigen::MatrixXf::Zero(kSpectralBins, kWindowFrames);
  model.standardization.stddev = Eigen::MatrixXf::Ones(kSpectralBins, kWindowFrames);
  return model;
}

std::vector<int> SegmentSet::class_indices() const {
  std::vector<int> out(labels.size());
  std::transform(labels.begin(), labels.end(), out.begin(), class_index);
  return out;
}

SegmentSet extract_segments(std::span<const AudioClip> clips, int hop, double threshold) {
  std::vector<AudioWindow> kept;
  SegmentSet set;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const AudioClip& clip = clips[i];
    if (!clip.label) throw Error(ErrorCode::InvalidArgument, "clip " + clip.source_id + " has no label");
    const auto windows = event_windows(frame_signal(clip), hop);
    std::size_t loudest = 0;
    double loudest_rms = -1.0;
    bool any = false;
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const double rms = window_rms(windows[w].samples);
      if (rms > loudest_rms) {
        loudest_rms = rms;
        loudest = w;
      }
      if (rms > threshold) {
        kept.push_back(windows[w]);
        set.labels.push_back(*clip.label);
        set.clip_index.push_back(i);
        any = true;
      }
    }
    if (!any) {
      kept.push_back(windows[loudest]);
      set.labels.push_back(*clip.label);
      set.clip_index.push_back(i);
    }
  }
  const auto n = static_cast<Eigen::Index>(kept.size());
  set.spectra.resize(kSegmentSize, n);
  set.audio.resize(kWindowSamples, n);
  set.origin_frame.reserve(kept.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& w = kept[static_cast<std::size_t>(j)];
    set.spectra.col(j) = flatten_segment(stft_segment(w.samples));
    set.audio.col(j) = Eigen::Map<const Eigen::VectorXf>(w.samples.data(), kWindowSamples);
    set.origin_frame.push_back(w.origin_frame);
  }
  return set;
}

Standardization standardize_fit(const Eigen::MatrixXf& spectra) {
  if (spectra.cols() < 2) throw Error(ErrorCode::InsufficientData, "standardization needs >= 2 segments");
  if (spectra.rows() != kSegmentSize) throw Error(ErrorCode::ShapeMismatch, "segments must have 1024 rows");
  const Eigen::MatrixXd x = spectra.cast<double>();
  const Eigen::VectorXd mean = x.rowwise().mean();
  const Eigen::VectorXd var = (x.colwise() - mean).array().square().rowwise().mean();
  const Eigen::VectorXd stddev = var.array().sqrt().max(kStdFloor);
  Standardization s;
  s.mean = unflatten_segment(mean.cast<float>());
  s.stddev = unflatten_segment(stddev.cast<float>());
  return s;
}

Eigen::MatrixXf standardize_apply(const Eigen::MatrixXf& spectra, const Standardization& stats) {
  if (spectra.rows() != kSegmentSize) throw Error(ErrorCode::ShapeMismatch, "segments must have 1024 rows");
  if (stats.mean.rows() != kSpectralBins || stats.mean.cols() != kWindowFrames)
    throw Error(ErrorCode::ShapeMismatch, "standardization statistics must be 64x16");
  const Eigen::VectorXf mean = flatten_segment(stats.mean);
  const Eigen::VectorXf inv = flatten_segment(stats.stddev).cwiseMax(static_cast<float>(kStdFloor)).cwiseInverse();
  return (spectra.colwise() - mean).array().colwise() * inv.array();
}

SegmentMatrix standardize_apply(const SegmentMatrix& segment, const Standardization& stats) {
  const Eigen::MatrixXf flat = flatten_segment(segment);
  return unflatten_segment(standardize_apply(flat, stats).col(0));
}

SetMetrics evaluate_standardized(const nn::Network<float>& net, const Eigen::MatrixXf& x, std::span<const Label> y) {
  if (x.cols() == 0) return {};
  double loss = 0.0;
  Eigen::Index correct = 0;
  for (Eigen::Index start = 0; start < x.cols(); start += kEvalChunk) {
    const Eigen::Index n = std::min(kEvalChunk, x.cols() - start);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) labels[static_cast<std::size_t>(j)] = class_index(y[static_cast<std::size_t>(start + j)]);
    const auto xent = nn::softmax_xent_forward(net.logits(x.middleCols(start, n)), labels);
    loss += xent.loss * static_cast<double>(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::Index arg;
      xent.probs.col(j).maxCoeff(&arg);
      if (arg == labels[static_cast<std::size_t>(j)]) ++correct;
    }
  }
  return {loss / static_cast<double>(x.cols()), static_cast<double>(correct) / static_cast<double>(x.cols())};
}

CnnModel train(const Eigen::MatrixXf& train_x, std::span<const Label> train_y, const Eigen::MatrixXf& val_x,
               std::span<const Label> val_y, const nn::SgdConfig& cfg, const CnnArchitecture& arch,
               const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_x.cols() == 0 || val_x.cols() == 0) throw Error(ErrorCode::EmptySplit, "train and validation must be nonempty");
  if (static_cast<std::size_t>(train_x.cols()) != train_y.size() ||
      static_cast<std::size_t>(val_x.cols()) != val_y.size())
    throw Error(ErrorCode::LengthMismatch, "label count differs from segment count");

  CnnModel model;
  model.network = build_network<float>(arch, cfg.seed);
  model.hyperparams = cfg;
  nn::SgdMomentum<float> optimizer(model.network, cfg);
  Rng shuffle_rng(cfg.seed, kShuffleStream);
  Rng dropout_rng(cfg.seed, kDropoutStream);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(train_x.cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  nn::Network<float> best = model.network;
  double best_acc = -1.0, best_loss = 0.0;
  nn::Gradients<float> grads;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t n = std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      Eigen::MatrixXf batch(train_x.rows(), static_cast<Eigen::Index>(n));
      std::vector<int> labels(n);
      for (std::size_t j = 0; j < n; ++j) {
        batch.col(static_cast<Eigen::Index>(j)) = train_x.col(order[start + j]);
        labels[j] = class_index(train_y[static_cast<std::size_t>(order[start + j])]);
      }
      const double loss = model.network.compute_gradients(batch, labels, &dropout_rng, grads);
      if (!std::isfinite(loss)) throw Error(ErrorCode::NumericFailure, "non-finite loss in epoch " + std::to_string(epoch));
      optimizer.step(model.network, grads);
    }

    const SetMetrics tr = evaluate_standardized(model.network, train_x, train_y);
    const SetMetrics va = evaluate_standardized(model.network, val_x, val_y);
    if (!std::isfinite(tr.loss) || !std::isfinite(va.loss))
      throw Error(ErrorCode::NumericFailure, "non-finite evaluation loss in epoch " + std::to_string(epoch));
    const EpochRecord record{epoch, tr.loss, tr.accuracy, va.loss, va.accuracy};
    model.history.push_back(record);
    if (va.accuracy > best_acc || (va.accuracy == best_acc && va.loss < best_loss)) {
      best_acc = va.accuracy;
      best_loss = va.loss;
      best = model.network;
    }
    if (on_epoch) on_epoch(record);
  }
  if (cfg.epochs > 0) model.network = std::move(best);
  return model;
}

CnnModel fit_deepcough(const SegmentSet& train_set, const SegmentSet& val_set, const nn::SgdConfig& cfg,
                       const CnnArchitecture& arch, const EpochCallback& on_epoch) {
  const Standardization stats = standardize_fit(train_set.spectra);
  CnnModel model = train(standardize_apply(train_set.spectra, stats), train_set.labels,
                         standardize_apply(val_set.spectra, stats), val_set.labels, cfg, arch, on_epoch);
  model.standardization = stats;
  return model;
}

Eigen::MatrixXf predict_spectra(const CnnModel& model, const Eigen::MatrixXf& raw_spectra) {
  const Eigen::MatrixXf x = standardize_apply(raw_spectra, model.standardization);
  Eigen::MatrixXf probs(2, x.cols());
  for (Eigen::Index start = 0; start < x.cols(); start += kEvalChunk) {
    const Eigen::Index n = std::min(kEvalChunk, x.cols() - start);
    probs.middleCols(start, n) = model.network.predict(x.middleCols(start, n));
  }
  return probs;
}

std::array<double, 2> predict_segment(const CnnModel& model, const SegmentMatrix& raw) {
  const Eigen::MatrixXf probs = predict_spectra(model, flatten_segment(raw));
  return {static_cast<double>(probs(0, 0)), static_cast<double>(probs(1, 0))};
}

EventWindow make_event_window(const AudioClip& clip, double threshold) {
  if (!clip.label) throw Error(ErrorCode::InvalidArgument, "clip " + clip.source_id + " has no label");
  const SegmentSet set = extract_segments(std::span(&clip, 1), kWindowFrames, threshold);
  EventWindow w;
  w.true_label = *clip.label;
  for (Eigen::Index j = 0; j < set.size(); ++j)
    w.segments.push_back({unflatten_segment(set.spectra.col(j)), set.origin_frame[static_cast<std::size_t>(j)]});
  return w;
}

WindowDecision decide_window(std::span<const double> segment_p_cough) {
  if (segment_p_cough.empty()) throw Error(ErrorCode::EmptyWindow, "window has no segments");
  double sum = 0.0;
  for (double p : segment_p_cough) sum += p;
  const double mean = sum / static_cast<double>(segment_p_cough.size());
  return {mean > 0.5 ? Label::Cough : Label::Speech, mean};
}

WindowDecision predict_window(const CnnModel& model, const EventWindow& window) {
  if (window.segments.empty()) throw Error(ErrorCode::EmptyWindow, "window has no segments");
  Eigen::MatrixXf raw(kSegmentSize, static_cast<Eigen::Index>(window.segments.size()));
  for (std::size_t j = 0; j < window.segments.size(); ++j)
    raw.col(static_cast<Eigen::Index>(j)) = flatten_segment(window.segments[j].values);
  const Eigen::MatrixXf probs = predict_spectra(model, raw);
  std::vector<double> p(window.segments.size());
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = probs(0, static_cast<Eigen::Index>(j));
  return decide_window(p);
}

std::vector<std::uint8_t> encode_model(const CnnModel& model) {
  ContainerWriter container(network_record_count(model.network));
  write_network_records(container.writer(), model.network);
  return container.finish({model.standardization.mean, model.standardization.stddev}, model.compression_epsilon);
}

CnnModel decode_model(std::span<const std::uint8_t> bytes) {
  ContainerReader container(bytes);
  CnnModel model;
  model.network = read_network_records(container.reader(), container.record_count());
  auto trailer = container.finish();
  if (trailer.stats.mean.rows() != kSpectralBins || trailer.stats.mean.cols() != kWindowFrames)
    throw Error(ErrorCode::ShapeMismatch, "CNN model needs 64x16 standardization statistics");
  model.standardization = {std::move(trailer.stats.mean), std::move(trailer.stats.stddev)};
  model.compression_epsilon = trailer.compression_constant;
  if (model.compression_epsilon != kLogCompressionEpsilon)
    throw Error(ErrorCode::VersionMismatch, "model was trained with a different spectrogram compression constant");
  return model;
}

void save_model(const CnnModel& model, const std::filesystem::path& path) {
  write_binary_file(path, encode_model(model));
}

CnnModel load_model(const std::filesystem::path& path) { return decode_model(read_binary_file(path)); }

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char line[160];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%d,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.train_loss, r.train_acc, r.val_loss,
                  r.val_acc);
    out << line;
  }
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace deepcough

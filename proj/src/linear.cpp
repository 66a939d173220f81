#include <algorithm>
#include <cmath>
#include <numeric>

#include "deepcough/baselines.hpp"
#include "deepcough/model_file.hpp"

namespace deepcough {

Eigen::Index feature_dimension(FeatureKind kind) {
  return kind == FeatureKind::Mfcc16x13 ? kWindowFrames * kMfccCoefficients : kSegmentSize;
}

Eigen::MatrixXd mfcc_features(const SegmentSet& segments) {
  Eigen::MatrixXd out(feature_dimension(FeatureKind::Mfcc16x13), segments.size());
  for (Eigen::Index j = 0; j < segments.size(); ++j) {
    const auto col = segments.audio.col(j);
    const MfccSequence seq = mfcc_sequence(std::span<const float>(col.data(), static_cast<std::size_t>(col.size())),
                                           kSegmentMfcc);
    if (seq.length() != kWindowFrames)
      throw Error(ErrorCode::ShapeMismatch, "expected 16 MFCC frames per segment, got " + std::to_string(seq.length()));
    Eigen::Map<Eigen::Matrix<double, kWindowFrames, kMfccCoefficients, Eigen::RowMajor>>(out.col(j).data()) =
        seq.coeffs;
  }
  return out;
}

Eigen::MatrixXd stft_features(const SegmentSet& segments) { return segments.spectra.cast<double>(); }

namespace {

void check_xy(const Eigen::MatrixXd& x, std::span<const Label> y) {
  if (x.cols() == 0) throw Error(ErrorCode::EmptyData, "no training examples");
  if (static_cast<std::size_t>(x.cols()) != y.size())
    throw Error(ErrorCode::LengthMismatch, "feature columns differ from label count");
}

struct ZScore {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

ZScore fit_zscore(const Eigen::MatrixXd& x) {
  ZScore z;
  z.mean = x.rowwise().mean();
  z.scale = ((x.colwise() - z.mean).array().square().rowwise().mean()).sqrt().max(kStdFloor);
  return z;
}

Eigen::MatrixXd apply_zscore(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean, const Eigen::VectorXd& scale) {
  if (x.rows() != mean.size()) throw Error(ErrorCode::ShapeMismatch, "feature dimension mismatch");
  return (x.colwise() - mean).array().colwise() / scale.array();
}

// Largest eigenvalue of a a^T / n by power iteration.
double top_eigenvalue(const Eigen::MatrixXd& a) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(a.rows()).normalized();
  double lambda = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd w = a * (a.transpose() * v) / static_cast<double>(a.cols());
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    lambda = v.dot(w);
    v = w / norm;
  }
  return lambda;
}

}  // namespace

Eigen::VectorXd LinearModel::cough_scores(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd z = apply_zscore(x, feature_mean, feature_scale);
  const Eigen::MatrixXd logits = (weights.transpose() * z).colwise() + bias;
  if (kind == Kind::Svm) return logits.row(0).transpose();
  Eigen::VectorXd p(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    const double e0 = std::exp(logits(0, j) - m), e1 = std::exp(logits(1, j) - m);
    p[j] = e0 / (e0 + e1);
  }
  return p;
}

std::vector<Label> LinearModel::predict(const Eigen::MatrixXd& x) const {
  const Eigen::VectorXd s = cough_scores(x);
  const double boundary = kind == Kind::Svm ? 0.0 : 0.5;
  std::vector<Label> out(static_cast<std::size_t>(s.size()));
  for (Eigen::Index j = 0; j < s.size(); ++j) out[static_cast<std::size_t>(j)] = s[j] > boundary ? Label::Cough : Label::Speech;
  return out;
}

double softmax_objective(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias, const Eigen::MatrixXd& x,
                         std::span<const Label> y, double weight_decay, Eigen::MatrixXd* grad_w,
                         Eigen::VectorXd* grad_b) {
  check_xy(x, y);
  const auto n = static_cast<double>(x.cols());
  Eigen::MatrixXd g = (weights.transpose() * x).colwise() + bias;  // logits, then dLoss/dlogits
  double loss = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double m = g.col(j).maxCoeff();
    const Eigen::ArrayXd e = (g.col(j).array() - m).exp();
    const double s = e.sum();
    const int label = class_index(y[static_cast<std::size_t>(j)]);
    loss += m + std::log(s) - g(label, j);
    g.col(j) = e / s;
    g(label, j) -= 1.0;
  }
  g /= n;
  if (grad_w) *grad_w = x * g.transpose() + weight_decay * weights;
  if (grad_b) *grad_b = g.rowwise().sum();
  return loss / n + 0.5 * weight_decay * weights.squaredNorm();
}

LinearModel train_softmax(const Eigen::MatrixXd& x, std::span<const Label> y, FeatureKind kind,
                          const SoftmaxConfig& cfg, SoftmaxTrace* trace) {
  check_xy(x, y);
  LinearModel model;
  model.kind = LinearModel::Kind::Softmax;
  model.features = kind;
  const ZScore zs = fit_zscore(x);
  model.feature_mean = zs.mean;
  model.feature_scale = zs.scale;
  const Eigen::MatrixXd z = apply_zscore(x, zs.mean, zs.scale);

  Eigen::MatrixXd augmented(z.rows() + 1, z.cols());
  augmented << z, Eigen::RowVectorXd::Ones(z.cols());
  // Multinomial logistic curvature is bounded by half the data Gram matrix.
  const double lipschitz = 0.5 * top_eigenvalue(augmented) * 1.05 + cfg.weight_decay;
  const double step = 1.0 / lipschitz;

  model.weights = Eigen::MatrixXd::Zero(z.rows(), 2);
  model.bias = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd gw;
  Eigen::VectorXd gb;
  int it = 0;
  double grad_norm = 0.0;
  for (; it < cfg.max_iters; ++it) {
    const double obj = softmax_objective(model.weights, model.bias, z, y, cfg.weight_decay, &gw, &gb);
    if (trace) trace->objective.push_back(obj);
    grad_norm = std::sqrt(gw.squaredNorm() + gb.squaredNorm());
    if (grad_norm < cfg.grad_tol) break;
    model.weights -= step * gw;
    model.bias -= step * gb;
  }
  if (trace) {
    trace->iterations = it;
    trace->final_grad_norm = grad_norm;
  }
  return model;
}

double svm_objective(const Eigen::VectorXd& w, double b, const Eigen::MatrixXd& x, std::span<const Label> y,
                     double lambda) {
  check_xy(x, y);
  const Eigen::VectorXd scores = (x.transpose() * w).array() + b;
  double hinge = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double sign = y[static_cast<std::size_t>(j)] == Label::Cough ? 1.0 : -1.0;
    hinge += std::max(0.0, 1.0 - sign * scores[j]);
  }
  return 0.5 * lambda * (w.squaredNorm() + b * b) + hinge / static_cast<double>(x.cols());
}

LinearModel train_linear_svm(const Eigen::MatrixXd& x, std::span<const Label> y, FeatureKind kind,
                             const SvmConfig& cfg, SvmTrace* trace) {
  check_xy(x, y);
  if (!(cfg.lambda > 0.0)) throw Error(ErrorCode::InvalidArgument, "SVM lambda must be positive");
  LinearModel model;
  model.kind = LinearModel::Kind::Svm;
  model.features = kind;
  const ZScore zs = fit_zscore(x);
  model.feature_mean = zs.mean;
  model.feature_scale = zs.scale;
  const Eigen::MatrixXd z = apply_zscore(x, zs.mean, zs.scale);

  // The bias rides along as a constant feature and is regularized with w.
  const Eigen::Index d = z.rows();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(d + 1);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(z.cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(cfg.seed, 0x53564D);
  double t = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (Eigen::Index j : order) {
      t += 1.0;
      const double eta = 1.0 / (cfg.lambda * t);
      const double sign = y[static_cast<std::size_t>(j)] == Label::Cough ? 1.0 : -1.0;
      const double margin = sign * (w.head(d).dot(z.col(j)) + w[d]);
      w *= 1.0 - eta * cfg.lambda;
      if (margin < 1.0) {
        w.head(d) += eta * sign * z.col(j);
        w[d] += eta * sign;
      }
      avg += (w - avg) / t;
    }
    if (trace) trace->objective.push_back(svm_objective(avg.head(d), avg[d], z, y, cfg.lambda));
  }
  model.weights = avg.head(d);
  model.bias = avg.tail(1);
  return model;
}

std::vector<std::uint8_t> encode_linear_model(const LinearModel& model) {
  ContainerWriter container(1);
  ByteWriter& out = container.writer();
  out.u8(static_cast<std::uint8_t>(model.kind == LinearModel::Kind::Svm ? RecordKind::LinearSvm
                                                                          : RecordKind::LinearSoftmax));
  out.u8(static_cast<std::uint8_t>(model.features));
  out.u32(static_cast<std::uint32_t>(model.weights.rows()));
  out.u32(static_cast<std::uint32_t>(model.weights.cols()));
  out.f64_matrix(model.weights);
  out.f64_matrix(model.bias);
  out.f64_matrix(model.feature_mean);
  out.f64_matrix(model.feature_scale);
  return container.finish({}, 0.0);
}

LinearModel decode_linear_model(std::span<const std::uint8_t> bytes) {
  ContainerReader container(bytes);
  if (container.record_count() != 1) throw Error(ErrorCode::ShapeMismatch, "linear model has exactly one record");
  ByteReader& in = container.reader();
  LinearModel model;
  const auto kind = static_cast<RecordKind>(in.u8());
  if (kind != RecordKind::LinearSoftmax && kind != RecordKind::LinearSvm)
    throw Error(ErrorCode::ShapeMismatch, "not a linear model record");
  model.kind = kind == RecordKind::LinearSvm ? LinearModel::Kind::Svm : LinearModel::Kind::Softmax;
  model.features = static_cast<FeatureKind>(in.u8());
  const Eigen::Index d = in.u32();
  const Eigen::Index c = in.u32();
  model.weights = in.f64_matrix(d, c);
  model.bias = in.f64_matrix(c, 1);
  model.feature_mean = in.f64_matrix(d, 1);
  model.feature_scale = in.f64_matrix(d, 1);
  container.finish();
  return model;
}

}  // namespace deepcough

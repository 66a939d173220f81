#ifndef DEEPCOUGH_BASELINES_HPP
#define DEEPCOUGH_BASELINES_HPP

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <vector>

#include "deepcough/cnn_model.hpp"
#include "deepcough/features.hpp"

namespace deepcough {

enum class FeatureKind : std::uint8_t { Mfcc16x13 = 1, Stft64x16 = 2 };

Eigen::Index feature_dimension(FeatureKind kind);

// 16 x 13 MFCCs (8 ms frames, 4 ms hop) per segment, flattened row-major: 208 x N.
Eigen::MatrixXd mfcc_features(const SegmentSet& segments);
// The log-magnitude spectra themselves: 1024 x N.
Eigen::MatrixXd stft_features(const SegmentSet& segments);

// Softmax regression (two weight columns, Cough first) or a linear SVM (one
// column, Cough = +1). Features are z-scored with the training statistics
// before the affine map.
struct LinearModel {
  enum class Kind : std::uint8_t { Softmax, Svm };

  Kind kind = Kind::Softmax;
  FeatureKind features = FeatureKind::Mfcc16x13;
  Eigen::MatrixXd weights;  // D x 2 or D x 1
  Eigen::VectorXd bias;     // 2 or 1
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;

  // p_cough for softmax, the signed decision value for the SVM.
  Eigen::VectorXd cough_scores(const Eigen::MatrixXd& x) const;
  std::vector<Label> predict(const Eigen::MatrixXd& x) const;
};

struct SoftmaxConfig {
  double weight_decay = 1e-4;
  double grad_tol = 1e-6;
  int max_iters = 10000;
};

// Mean cross-entropy plus (weight_decay / 2) * ||W||^2 (bias unpenalised).
// Gradients are written when the output pointers are non-null.
double softmax_objective(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias, const Eigen::MatrixXd& x,
                         std::span<const Label> y, double weight_decay, Eigen::MatrixXd* grad_w = nullptr,
                         Eigen::VectorXd* grad_b = nullptr);

struct SoftmaxTrace {
  int iterations = 0;
  double final_grad_norm = 0.0;
  std::vector<double> objective;
};

// Full-batch gradient descent with step 1 / L, L bounding the curvature.
LinearModel train_softmax(const Eigen::MatrixXd& x, std::span<const Label> y, FeatureKind kind,
                          const SoftmaxConfig& cfg = {}, SoftmaxTrace* trace = nullptr);

struct SvmConfig {
  double lambda = 1e-4;
  int epochs = 30;
  std::uint64_t seed = 42;
};

// (lambda / 2) * (||w||^2 + b^2) + mean hinge loss.
double svm_objective(const Eigen::VectorXd& w, double b, const Eigen::MatrixXd& x, std::span<const Label> y,
                     double lambda);

struct SvmTrace {
  std::vector<double> objective;  // averaged iterate, after each epoch
};

// Pegasos: stochastic subgradient steps of size 1 / (lambda * t) over a
// seeded shuffle each epoch; the averaged iterate is returned.
LinearModel train_linear_svm(const Eigen::MatrixXd& x, std::span<const Label> y, FeatureKind kind,
                             const SvmConfig& cfg = {}, SvmTrace* trace = nullptr);

// Diagonal-covariance Gaussian mixture.
struct DiagonalGmm {
  Eigen::VectorXd weights;    // K
  Eigen::MatrixXd means;      // D x K
  Eigen::MatrixXd variances;  // D x K

  Eigen::Index components() const { return weights.size(); }
  Eigen::Index dimension() const { return means.rows(); }
  // log N_k(x) + log w_k for every component.
  Eigen::VectorXd component_log_densities(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

// Left-to-right HMM. State 0 is the non-emitting entry and the last state the
// non-emitting exit; every other state emits through its own GMM. Allowed
// moves from an emitting state are self, next and skip-one.
struct HmmModel {
  Eigen::MatrixXd transitions;  // N x N, rows sum to 1, exit row is a self-loop
  std::vector<DiagonalGmm> emissions;  // N - 2, emissions[e] belongs to state e + 1

  Eigen::Index n_states() const { return transitions.rows(); }
  Eigen::Index emitting() const { return static_cast<Eigen::Index>(emissions.size()); }
  // Fewest frames that can go from entry to exit.
  Eigen::Index min_length() const;
};

// Whether the left-to-right topology permits from -> to.
bool hmm_transition_allowed(Eigen::Index n_states, Eigen::Index from, Eigen::Index to);
// Fewest frames on any entry-to-exit path of that topology.
Eigen::Index hmm_min_length(Eigen::Index n_states);

struct HmmConfig {
  Eigen::Index n_states = 10;
  Eigen::Index components = 3;
  double variance_floor = 1e-4;
  int max_iters = 50;
  double tol = 1e-4;  // relative log-likelihood improvement
  int kmeans_iters = 10;
};

// Uniform temporal segmentation of every sequence across the emitting states,
// then seeded k-means per state for the mixtures.
HmmModel hmm_init(std::span<const MfccSequence> sequences, const HmmConfig& cfg, std::uint64_t seed);

struct BaumWelchTrace {
  // Total log-likelihood of the training data before each re-estimation,
  // then once more for the returned model.
  std::vector<double> log_likelihood;
};

HmmModel hmm_baum_welch(HmmModel model, std::span<const MfccSequence> sequences, const HmmConfig& cfg,
                        BaumWelchTrace* trace = nullptr);

HmmModel hmm_train(std::span<const MfccSequence> sequences, const HmmConfig& cfg, std::uint64_t seed,
                   BaumWelchTrace* trace = nullptr);

// Forward algorithm in log space; -inf when the sequence is shorter than
// min_length().
double hmm_loglik(const HmmModel& model, const Eigen::MatrixXd& frames);
double hmm_loglik(const HmmModel& model, const MfccSequence& seq);
// log p(o_1..o_T) without requiring the path to end at the exit state.
double hmm_prefix_loglik(const HmmModel& model, const Eigen::MatrixXd& frames);

struct HmmDecision {
  Label label;
  double llr;  // ll_cough - ll_speech
};

HmmDecision hmm_classify(const HmmModel& cough, const HmmModel& speech, const MfccSequence& seq);

std::vector<std::uint8_t> encode_linear_model(const LinearModel& model);
LinearModel decode_linear_model(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_hmm(const HmmModel& model);
HmmModel decode_hmm(std::span<const std::uint8_t> bytes);

}  // namespace deepcough

#endif  // DEEPCOUGH_BASELINES_HPP

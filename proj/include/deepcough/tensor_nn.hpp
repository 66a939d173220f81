#ifndef DEEPCOUGH_TENSOR_NN_HPP
#define DEEPCOUGH_TENSOR_NN_HPP

#include <Eigen/Core>

#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "deepcough/common.hpp"

// Dense layers with analytic forward/backward passes, templated on the
// scalar type: float for training and inference, double for gradient checks.
//
// Batches are matrices with one example per column. An example with shape
// C x H x W is flattened row-major (channel, then row, then column).
namespace deepcough::nn {

using Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct Shape3 {
  Index channels = 1;
  Index height = 1;
  Index width = 1;

  Index size() const { return channels * height * width; }
  bool operator==(const Shape3&) const = default;
};

std::string to_string(const Shape3& s);

template <typename Scalar>
struct Tensor {
  std::vector<Index> shape;
  Vector<Scalar> data;

  Tensor() = default;
  Tensor(std::vector<Index> dims, Vector<Scalar> values);
  static Tensor zeros(std::vector<Index> dims);

  Index size() const { return data.size(); }
  Shape3 as_shape3() const;
};

template <typename Scalar>
struct Conv2D {
  Shape3 input;
  Index filters = 0;
  Index kernel_h = 0;  // frequency axis
  Index kernel_w = 0;  // time axis
  Matrix<Scalar> weights;  // filters x (channels * kernel_h * kernel_w)
  Vector<Scalar> biases;

  Conv2D() = default;
  Conv2D(Shape3 in, Index n_filters, Index kh, Index kw);
  Shape3 output() const;
};

struct MaxPool {
  Shape3 input;
  Index pool_h = 2;
  Index pool_w = 1;

  Shape3 output() const;
};

struct Relu {
  Index size = 0;
};

template <typename Scalar>
struct Dense {
  Matrix<Scalar> weights;  // outputs x inputs
  Vector<Scalar> biases;

  Dense() = default;
  Dense(Index inputs, Index outputs);
  Index inputs() const { return weights.cols(); }
  Index outputs() const { return weights.rows(); }
};

struct Dropout {
  Index size = 0;
  double p = 0.5;
};

template <typename Scalar>
using Layer = std::variant<Conv2D<Scalar>, Relu, MaxPool, Dense<Scalar>, Dropout>;

template <typename Scalar>
Index layer_input_size(const Layer<Scalar>& layer);
template <typename Scalar>
Index layer_output_size(const Layer<Scalar>& layer);

template <typename Scalar>
struct LayerGrad {
  Matrix<Scalar> input;
  Matrix<Scalar> weights;
  Vector<Scalar> biases;
};

// Valid cross-correlation, stride 1.
template <typename Scalar>
Matrix<Scalar> conv2d_forward(const Conv2D<Scalar>& layer, const Matrix<Scalar>& input);
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Conv2D<Scalar>& layer, const Tensor<Scalar>& input);
template <typename Scalar>
LayerGrad<Scalar> conv2d_backward(const Conv2D<Scalar>& layer, const Matrix<Scalar>& input,
                                  const Matrix<Scalar>& grad_out);

// Ties go to the first (lowest-index) maximum in both directions.
template <typename Scalar>
Matrix<Scalar> maxpool_forward(const MaxPool& layer, const Matrix<Scalar>& input);
template <typename Scalar>
Tensor<Scalar> maxpool_forward(const MaxPool& layer, const Tensor<Scalar>& input);
template <typename Scalar>
Matrix<Scalar> maxpool_backward(const MaxPool& layer, const Matrix<Scalar>& input,
                                const Matrix<Scalar>& grad_out);

template <typename Scalar>
Matrix<Scalar> relu_forward(const Matrix<Scalar>& input);
// Subgradient 0 at 0.
template <typename Scalar>
Matrix<Scalar> relu_backward(const Matrix<Scalar>& input, const Matrix<Scalar>& grad_out);

template <typename Scalar>
Matrix<Scalar> dense_forward(const Dense<Scalar>& layer, const Matrix<Scalar>& input);
template <typename Scalar>
LayerGrad<Scalar> dense_backward(const Dense<Scalar>& layer, const Matrix<Scalar>& input,
                                 const Matrix<Scalar>& grad_out);

template <typename Scalar>
struct DropoutResult {
  Matrix<Scalar> output;
  Matrix<Scalar> mask;  // empty in inference mode
};

// Inverted dropout. A null rng selects inference mode (identity).
template <typename Scalar>
DropoutResult<Scalar> dropout_forward(const Dropout& layer, const Matrix<Scalar>& input, Rng* rng);
template <typename Scalar>
Matrix<Scalar> dropout_backward(const Matrix<Scalar>& mask, const Matrix<Scalar>& grad_out);

// Column-wise softmax with the column max subtracted first.
template <typename Scalar>
Matrix<Scalar> softmax(const Matrix<Scalar>& logits);

template <typename Scalar>
struct SoftmaxXent {
  Matrix<Scalar> probs;
  double loss = 0.0;  // mean over the batch
};

template <typename Scalar>
SoftmaxXent<Scalar> softmax_xent_forward(const Matrix<Scalar>& logits, std::span<const int> labels);
// Gradient of the mean loss: (probs - one_hot) / batch.
template <typename Scalar>
Matrix<Scalar> softmax_xent_backward(const Matrix<Scalar>& probs, std::span<const int> labels);

struct SgdConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  Index batch_size = 20;
  int epochs = 50;
  std::uint64_t seed = 42;

  void validate() const;
};

// Classical momentum: v <- momentum * v - lr * g; theta <- theta + v.
template <typename P, typename G, typename V>
void sgd_momentum_step(Eigen::MatrixBase<P>& params, const Eigen::MatrixBase<G>& grads,
                       Eigen::MatrixBase<V>& velocity, double learning_rate, double momentum) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols() || params.rows() != velocity.rows() ||
      params.cols() != velocity.cols())
    throw Error(ErrorCode::ShapeMismatch, "sgd_momentum_step operands differ in shape");
  using S = typename P::Scalar;
  velocity = static_cast<S>(momentum) * velocity - static_cast<S>(learning_rate) * grads;
  params += velocity;
}

// One flattened vector per parameter tensor, in network order (weights then
// biases of each trainable layer).
template <typename Scalar>
using Gradients = std::vector<Vector<Scalar>>;

template <typename Scalar>
class Network {
 public:
  std::vector<Layer<Scalar>> layers;

  Index input_size() const;
  Index output_size() const;
  Index parameter_count() const;
  void validate() const;

  // Logits for a batch; dropout is the identity.
  Matrix<Scalar> logits(const Matrix<Scalar>& batch) const;
  Matrix<Scalar> predict(const Matrix<Scalar>& batch) const { return softmax(logits(batch)); }

  // Training-mode pass (dropout active when rng is non-null). Writes the
  // gradient of the mean cross-entropy into `grads` and returns the loss.
  double compute_gradients(const Matrix<Scalar>& batch, std::span<const int> labels, Rng* dropout_rng,
                           Gradients<Scalar>& grads) const;

  // Writable views over every parameter tensor, matching Gradients order.
  std::vector<Eigen::Map<Vector<Scalar>>> parameters();
  std::vector<Eigen::Map<const Vector<Scalar>>> parameters() const;
  Gradients<Scalar> zero_gradients() const;

  template <typename Other>
  Network<Other> cast() const;
};

template <typename Scalar>
class SgdMomentum {
 public:
  SgdMomentum(const Network<Scalar>& net, SgdConfig config);
  void step(Network<Scalar>& net, const Gradients<Scalar>& grads);
  const Gradients<Scalar>& velocity() const { return velocity_; }

 private:
  SgdConfig config_;
  Gradients<Scalar> velocity_;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  Index worst_parameter = -1;
  Index parameters_checked = 0;
};

// Applied to the analytic gradients before comparison; used to inject faults.
using GradientTamper = std::function<void(Gradients<double>&)>;

// Central differences over every parameter, relative error
// |a - n| / max(|a|, |n|, 1e-8). Dropout is disabled.
GradCheckResult gradient_check(Network<double>& net, const Vector<double>& input, int label, double h = 1e-5,
                               const GradientTamper& tamper = {});

}  // namespace deepcough::nn

#endif  // DEEPCOUGH_TENSOR_NN_HPP

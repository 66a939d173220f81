#include "deepcough/tensor_nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace deepcough::nn {

std::string to_string(const Shape3& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

template <typename Scalar>
Tensor<Scalar>::Tensor(std::vector<Index> dims, Vector<Scalar> values) : shape(std::move(dims)), data(std::move(values)) {
  const Index n = std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
  if (n != data.size() || std::any_of(shape.begin(), shape.end(), [](Index d) { return d <= 0; }))
    throw Error(ErrorCode::ShapeMismatch, "tensor shape does not match its data");
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(std::vector<Index> dims) {
  const Index n = std::accumulate(dims.begin(), dims.end(), Index{1}, std::multiplies<>());
  return Tensor(std::move(dims), Vector<Scalar>::Zero(n));
}

template <typename Scalar>
Shape3 Tensor<Scalar>::as_shape3() const {
  if (shape.size() == 3) return {shape[0], shape[1], shape[2]};
  if (shape.size() == 2) return {1, shape[0], shape[1]};
  if (shape.size() == 1) return {1, 1, shape[0]};
  throw Error(ErrorCode::ShapeMismatch, "tensor is not 1-, 2- or 3-dimensional");
}

template <typename Scalar>
Conv2D<Scalar>::Conv2D(Shape3 in, Index n_filters, Index kh, Index kw)
    : input(in),
      filters(n_filters),
      kernel_h(kh),
      kernel_w(kw),
      weights(Matrix<Scalar>::Zero(n_filters, in.channels * kh * kw)),
      biases(Vector<Scalar>::Zero(n_filters)) {
  if (in.height < kh || in.width < kw)
    throw Error(ErrorCode::ShapeMismatch, "kernel larger than input " + to_string(in));
}

template <typename Scalar>
Shape3 Conv2D<Scalar>::output() const {
  return {filters, input.height - kernel_h + 1, input.width - kernel_w + 1};
}

Shape3 MaxPool::output() const { return {input.channels, input.height / pool_h, input.width / pool_w}; }

template <typename Scalar>
Dense<Scalar>::Dense(Index inputs, Index outputs)
    : weights(Matrix<Scalar>::Zero(outputs, inputs)), biases(Vector<Scalar>::Zero(outputs)) {}

template <typename Scalar>
Index layer_input_size(const Layer<Scalar>& layer) {
  return std::visit(
      [](const auto& l) -> Index {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv2D<Scalar>> || std::is_same_v<L, MaxPool>)
          return l.input.size();
        else if constexpr (std::is_same_v<L, Dense<Scalar>>)
          return l.inputs();
        else
          return l.size;
      },
      layer);
}

template <typename Scalar>
Index layer_output_size(const Layer<Scalar>& layer) {
  return std::visit(
      [](const auto& l) -> Index {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv2D<Scalar>> || std::is_same_v<L, MaxPool>)
          return l.output().size();
        else if constexpr (std::is_same_v<L, Dense<Scalar>>)
          return l.outputs();
        else
          return l.size;
      },
      layer);
}

namespace {

template <typename Scalar>
void check_rows(const Matrix<Scalar>& m, Index rows, const char* what) {
  if (m.rows() != rows)
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": expected " + std::to_string(rows) +
                                              " rows, got " + std::to_string(m.rows()));
}

// Patch matrix: row b * P + (i * W' + j), column (c * kh + u) * kw + v.
template <typename Scalar>
Matrix<Scalar> im2col(const Conv2D<Scalar>& layer, const Matrix<Scalar>& input) {
  const Shape3 in = layer.input;
  const Shape3 out = layer.output();
  const Index positions = out.height * out.width;
  const Index batch = input.cols();
  Matrix<Scalar> patches(batch * positions, layer.weights.cols());
  for (Index b = 0; b < batch; ++b) {
    const Scalar* x = input.col(b).data();
    for (Index c = 0; c < in.channels; ++c)
      for (Index u = 0; u < layer.kernel_h; ++u)
        for (Index v = 0; v < layer.kernel_w; ++v) {
          const Index k = (c * layer.kernel_h + u) * layer.kernel_w + v;
          Scalar* dst = patches.col(k).data() + b * positions;
          for (Index i = 0; i < out.height; ++i) {
            const Scalar* src = x + c * in.height * in.width + (i + u) * in.width + v;
            std::copy_n(src, out.width, dst + i * out.width);
          }
        }
  }
  return patches;
}

}  // namespace

template <typename Scalar>
Matrix<Scalar> conv2d_forward(const Conv2D<Scalar>& layer, const Matrix<Scalar>& input) {
  check_rows(input, layer.input.size(), "conv2d_forward");
  const Shape3 out = layer.output();
  const Index positions = out.height * out.width;
  const Matrix<Scalar> patches = im2col(layer, input);
  const Matrix<Scalar> response = patches * layer.weights.transpose();
  Matrix<Scalar> result(out.size(), input.cols());
  for (Index b = 0; b < input.cols(); ++b)
    for (Index f = 0; f < layer.filters; ++f)
      result.col(b).segment(f * positions, positions) =
          response.col(f).segment(b * positions, positions).array() + layer.biases[f];
  return result;
}

template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Conv2D<Scalar>& layer, const Tensor<Scalar>& input) {
  if (!(input.as_shape3() == layer.input))
    throw Error(ErrorCode::ShapeMismatch, "conv2d input " + to_string(input.as_shape3()) + " vs layer " +
                                              to_string(layer.input));
  const Shape3 out = layer.output();
  return Tensor<Scalar>({out.channels, out.height, out.width}, conv2d_forward(layer, Matrix<Scalar>(input.data)));
}

template <typename Scalar>
LayerGrad<Scalar> conv2d_backward(const Conv2D<Scalar>& layer, const Matrix<Scalar>& input,
                                  const Matrix<Scalar>& grad_out) {
  check_rows(input, layer.input.size(), "conv2d_backward input");
  check_rows(grad_out, layer.output().size(), "conv2d_backward grad");
  if (input.cols() != grad_out.cols()) throw Error(ErrorCode::ShapeMismatch, "conv2d_backward batch sizes differ");
  const Shape3 in = layer.input;
  const Shape3 out = layer.output();
  const Index positions = out.height * out.width;
  const Index batch = input.cols();

  Matrix<Scalar> g(batch * positions, layer.filters);
  for (Index b = 0; b < batch; ++b)
    for (Index f = 0; f < layer.filters; ++f)
      g.col(f).segment(b * positions, positions) = grad_out.col(b).segment(f * positions, positions);

  const Matrix<Scalar> patches = im2col(layer, input);
  LayerGrad<Scalar> result;
  result.weights = g.transpose() * patches;
  result.biases = g.colwise().sum().transpose();

  const Matrix<Scalar> grad_patches = g * layer.weights;
  result.input = Matrix<Scalar>::Zero(in.size(), batch);
  for (Index b = 0; b < batch; ++b) {
    Scalar* dx = result.input.col(b).data();
    for (Index c = 0; c < in.channels; ++c)
      for (Index u = 0; u < layer.kernel_h; ++u)
        for (Index v = 0; v < layer.kernel_w; ++v) {
          const Index k = (c * layer.kernel_h + u) * layer.kernel_w + v;
          const Scalar* src = grad_patches.col(k).data() + b * positions;
          for (Index i = 0; i < out.height; ++i) {
            Scalar* dst = dx + c * in.height * in.width + (i + u) * in.width + v;
            for (Index j = 0; j < out.width; ++j) dst[j] += src[i * out.width + j];
          }
        }
  }
  return result;
}

namespace {

void check_pool(const MaxPool& layer) {
  if (layer.pool_h <= 0 || layer.pool_w <= 0 || layer.input.height % layer.pool_h != 0 ||
      layer.input.width % layer.pool_w != 0)
    throw Error(ErrorCode::ShapeMismatch, "pool " + std::to_string(layer.pool_h) + "x" +
                                              std::to_string(layer.pool_w) + " does not tile " +
                                              to_string(layer.input));
}

// Calls fn(out_index, argmax_input_index) for every pooled output of column b.
template <typename Scalar, typename Fn>
void for_each_argmax(const MaxPool& layer, const Scalar* x, Fn&& fn) {
  const Shape3 in = layer.input;
  const Shape3 out = layer.output();
  for (Index c = 0; c < out.channels; ++c)
    for (Index i = 0; i < out.height; ++i)
      for (Index j = 0; j < out.width; ++j) {
        Index best = c * in.height * in.width + (i * layer.pool_h) * in.width + j * layer.pool_w;
        for (Index u = 0; u < layer.pool_h; ++u)
          for (Index v = 0; v < layer.pool_w; ++v) {
            const Index idx = c * in.height * in.width + (i * layer.pool_h + u) * in.width + j * layer.pool_w + v;
            if (x[idx] > x[best]) best = idx;
          }
        fn((c * out.height + i) * out.width + j, best);
      }
}

}  // namespace

template <typename Scalar>
Matrix<Scalar> maxpool_forward(const MaxPool& layer, const Matrix<Scalar>& input) {
  check_pool(layer);
  check_rows(input, layer.input.size(), "maxpool_forward");
  Matrix<Scalar> out(layer.output().size(), input.cols());
  for (Index b = 0; b < input.cols(); ++b) {
    const Scalar* x = input.col(b).data();
    Scalar* y = out.col(b).data();
    for_each_argmax(layer, x, [&](Index o, Index a) { y[o] = x[a]; });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> maxpool_forward(const MaxPool& layer, const Tensor<Scalar>& input) {
  if (!(input.as_shape3() == layer.input))
    throw Error(ErrorCode::ShapeMismatch, "maxpool input " + to_string(input.as_shape3()) + " vs layer " +
                                              to_string(layer.input));
  const Shape3 out = layer.output();
  return Tensor<Scalar>({out.channels, out.height, out.width}, maxpool_forward(layer, Matrix<Scalar>(input.data)));
}

template <typename Scalar>
Matrix<Scalar> maxpool_backward(const MaxPool& layer, const Matrix<Scalar>& input, const Matrix<Scalar>& grad_out) {
  check_pool(layer);
  check_rows(input, layer.input.size(), "maxpool_backward input");
  check_rows(grad_out, layer.output().size(), "maxpool_backward grad");
  Matrix<Scalar> grad_in = Matrix<Scalar>::Zero(input.rows(), input.cols());
  for (Index b = 0; b < input.cols(); ++b) {
    const Scalar* g = grad_out.col(b).data();
    Scalar* dx = grad_in.col(b).data();
    for_each_argmax(layer, input.col(b).data(), [&](Index o, Index a) { dx[a] += g[o]; });
  }
  return grad_in;
}

template <typename Scalar>
Matrix<Scalar> relu_forward(const Matrix<Scalar>& input) {
  return input.cwiseMax(Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> relu_backward(const Matrix<Scalar>& input, const Matrix<Scalar>& grad_out) {
  if (input.rows() != grad_out.rows() || input.cols() != grad_out.cols())
    throw Error(ErrorCode::ShapeMismatch, "relu_backward shapes differ");
  return (input.array() > Scalar(0)).select(grad_out, Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> dense_forward(const Dense<Scalar>& layer, const Matrix<Scalar>& input) {
  check_rows(input, layer.inputs(), "dense_forward");
  return (layer.weights * input).colwise() + layer.biases;
}

template <typename Scalar>
LayerGrad<Scalar> dense_backward(const Dense<Scalar>& layer, const Matrix<Scalar>& input,
                                 const Matrix<Scalar>& grad_out) {
  check_rows(input, layer.inputs(), "dense_backward input");
  check_rows(grad_out, layer.outputs(), "dense_backward grad");
  LayerGrad<Scalar> result;
  result.weights = grad_out * input.transpose();
  result.biases = grad_out.rowwise().sum();
  result.input = layer.weights.transpose() * grad_out;
  return result;
}

template <typename Scalar>
DropoutResult<Scalar> dropout_forward(const Dropout& layer, const Matrix<Scalar>& input, Rng* rng) {
  if (!(layer.p >= 0.0 && layer.p < 1.0)) throw Error(ErrorCode::InvalidArgument, "dropout p must lie in [0, 1)");
  if (rng == nullptr || layer.p == 0.0) return {input, {}};
  const Scalar keep_scale = Scalar(1.0 / (1.0 - layer.p));
  Matrix<Scalar> mask(input.rows(), input.cols());
  for (Index c = 0; c < mask.cols(); ++c)
    for (Index r = 0; r < mask.rows(); ++r) mask(r, c) = rng->bernoulli(1.0 - layer.p) ? keep_scale : Scalar(0);
  return {input.cwiseProduct(mask), std::move(mask)};
}

template <typename Scalar>
Matrix<Scalar> dropout_backward(const Matrix<Scalar>& mask, const Matrix<Scalar>& grad_out) {
  if (mask.size() == 0) return grad_out;
  if (mask.rows() != grad_out.rows() || mask.cols() != grad_out.cols())
    throw Error(ErrorCode::ShapeMismatch, "dropout mask and gradient differ");
  return grad_out.cwiseProduct(mask);
}

template <typename Scalar>
Matrix<Scalar> softmax(const Matrix<Scalar>& logits) {
  Matrix<Scalar> probs(logits.rows(), logits.cols());
  for (Index c = 0; c < logits.cols(); ++c) {
    const auto col = logits.col(c).array();
    const auto e = (col - col.maxCoeff()).exp().eval();
    probs.col(c) = e / e.sum();
  }
  return probs;
}

template <typename Scalar>
SoftmaxXent<Scalar> softmax_xent_forward(const Matrix<Scalar>& logits, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != logits.cols())
    throw Error(ErrorCode::ShapeMismatch, "label count differs from batch size");
  SoftmaxXent<Scalar> result;
  result.probs = softmax(logits);
  double total = 0.0;
  for (Index c = 0; c < logits.cols(); ++c) {
    const int y = labels[static_cast<std::size_t>(c)];
    if (y < 0 || y >= logits.rows()) throw Error(ErrorCode::ShapeMismatch, "label out of range");
    const auto col = logits.col(c).template cast<double>().array();
    const double m = col.maxCoeff();
    total += m + std::log((col - m).exp().sum()) - col[y];
  }
  result.loss = total / static_cast<double>(logits.cols());
  return result;
}

template <typename Scalar>
Matrix<Scalar> softmax_xent_backward(const Matrix<Scalar>& probs, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != probs.cols())
    throw Error(ErrorCode::ShapeMismatch, "label count differs from batch size");
  Matrix<Scalar> grad = probs;
  for (Index c = 0; c < probs.cols(); ++c) grad(labels[static_cast<std::size_t>(c)], c) -= Scalar(1);
  return grad / static_cast<Scalar>(probs.cols());
}

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::InvalidArgument, "momentum must lie in [0, 1)");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be >= 1");
  if (epochs < 0) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 0");
}

template <typename Scalar>
Index Network<Scalar>::input_size() const {
  return layers.empty() ? 0 : layer_input_size<Scalar>(layers.front());
}

template <typename Scalar>
Index Network<Scalar>::output_size() const {
  return layers.empty() ? 0 : layer_output_size<Scalar>(layers.back());
}

template <typename Scalar>
Index Network<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

template <typename Scalar>
void Network<Scalar>::validate() const {
  for (std::size_t l = 1; l < layers.size(); ++l)
    if (layer_input_size<Scalar>(layers[l]) != layer_output_size<Scalar>(layers[l - 1]))
      throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(l) + " expects " +
                                                std::to_string(layer_input_size<Scalar>(layers[l])) +
                                                " inputs, previous layer produces " +
                                                std::to_string(layer_output_size<Scalar>(layers[l - 1])));
}

template <typename Scalar>
Matrix<Scalar> Network<Scalar>::logits(const Matrix<Scalar>& batch) const {
  Matrix<Scalar> x = batch;
  for (const auto& layer : layers) {
    x = std::visit(
        [&](const auto& l) -> Matrix<Scalar> {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2D<Scalar>>)
            return conv2d_forward(l, x);
          else if constexpr (std::is_same_v<L, MaxPool>)
            return maxpool_forward(l, x);
          else if constexpr (std::is_same_v<L, Relu>)
            return relu_forward(x);
          else if constexpr (std::is_same_v<L, Dense<Scalar>>)
            return dense_forward(l, x);
          else
            return std::move(x);
        },
        layer);
  }
  return x;
}

template <typename Scalar>
double Network<Scalar>::compute_gradients(const Matrix<Scalar>& batch, std::span<const int> labels, Rng* dropout_rng,
                                          Gradients<Scalar>& grads) const {
  const std::size_t n_layers = layers.size();
  std::vector<Matrix<Scalar>> acts;
  acts.reserve(n_layers + 1);
  acts.push_back(batch);
  std::vector<Matrix<Scalar>> masks(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Matrix<Scalar>& x = acts.back();
    acts.push_back(std::visit(
        [&](const auto& layer) -> Matrix<Scalar> {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, Conv2D<Scalar>>) {
            return conv2d_forward(layer, x);
          } else if constexpr (std::is_same_v<L, MaxPool>) {
            return maxpool_forward(layer, x);
          } else if constexpr (std::is_same_v<L, Relu>) {
            return relu_forward(x);
          } else if constexpr (std::is_same_v<L, Dense<Scalar>>) {
            return dense_forward(layer, x);
          } else {
            auto r = dropout_forward(layer, x, dropout_rng);
            masks[l] = std::move(r.mask);
            return std::move(r.output);
          }
        },
        layers[l]));
  }

  const auto xent = softmax_xent_forward(acts.back(), labels);
  Matrix<Scalar> grad = softmax_xent_backward(xent.probs, labels);

  grads = zero_gradients();
  std::size_t slot = grads.size();
  for (std::size_t l = n_layers; l-- > 0;) {
    const Matrix<Scalar>& x = acts[l];
    grad = std::visit(
        [&](const auto& layer) -> Matrix<Scalar> {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, Conv2D<Scalar>> || std::is_same_v<L, Dense<Scalar>>) {
            LayerGrad<Scalar> g;
            if constexpr (std::is_same_v<L, Conv2D<Scalar>>)
              g = conv2d_backward(layer, x, grad);
            else
              g = dense_backward(layer, x, grad);
            slot -= 2;
            grads[slot] = Eigen::Map<const Vector<Scalar>>(g.weights.data(), g.weights.size());
            grads[slot + 1] = g.biases;
            return std::move(g.input);
          } else if constexpr (std::is_same_v<L, MaxPool>) {
            return maxpool_backward(layer, x, grad);
          } else if constexpr (std::is_same_v<L, Relu>) {
            return relu_backward(x, grad);
          } else {
            return dropout_backward(masks[l], grad);
          }
        },
        layers[l]);
  }
  return xent.loss;
}

template <typename Scalar>
std::vector<Eigen::Map<Vector<Scalar>>> Network<Scalar>::parameters() {
  std::vector<Eigen::Map<Vector<Scalar>>> out;
  for (auto& layer : layers)
    std::visit(
        [&](auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2D<Scalar>> || std::is_same_v<L, Dense<Scalar>>) {
            out.emplace_back(l.weights.data(), l.weights.size());
            out.emplace_back(l.biases.data(), l.biases.size());
          }
        },
        layer);
  return out;
}

template <typename Scalar>
std::vector<Eigen::Map<const Vector<Scalar>>> Network<Scalar>::parameters() const {
  std::vector<Eigen::Map<const Vector<Scalar>>> out;
  for (const auto& layer : layers)
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2D<Scalar>> || std::is_same_v<L, Dense<Scalar>>) {
            out.emplace_back(l.weights.data(), l.weights.size());
            out.emplace_back(l.biases.data(), l.biases.size());
          }
        },
        layer);
  return out;
}

template <typename Scalar>
Gradients<Scalar> Network<Scalar>::zero_gradients() const {
  Gradients<Scalar> g;
  for (const auto& p : parameters()) g.push_back(Vector<Scalar>::Zero(p.size()));
  return g;
}

template <typename Scalar>
template <typename Other>
Network<Other> Network<Scalar>::cast() const {
  Network<Other> out;
  for (const auto& layer : layers)
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2D<Scalar>>) {
            Conv2D<Other> c(l.input, l.filters, l.kernel_h, l.kernel_w);
            c.weights = l.weights.template cast<Other>();
            c.biases = l.biases.template cast<Other>();
            out.layers.emplace_back(std::move(c));
          } else if constexpr (std::is_same_v<L, Dense<Scalar>>) {
            Dense<Other> d;
            d.weights = l.weights.template cast<Other>();
            d.biases = l.biases.template cast<Other>();
            out.layers.emplace_back(std::move(d));
          } else {
            out.layers.emplace_back(l);
          }
        },
        layer);
  return out;
}

template <typename Scalar>
SgdMomentum<Scalar>::SgdMomentum(const Network<Scalar>& net, SgdConfig config)
    : config_(config), velocity_(net.zero_gradients()) {
  config_.validate();
}

template <typename Scalar>
void SgdMomentum<Scalar>::step(Network<Scalar>& net, const Gradients<Scalar>& grads) {
  auto params = net.parameters();
  if (params.size() != grads.size() || params.size() != velocity_.size())
    throw Error(ErrorCode::ShapeMismatch, "gradient list does not match the network");
  for (std::size_t i = 0; i < params.size(); ++i)
    sgd_momentum_step(params[i], grads[i], velocity_[i], config_.learning_rate, config_.momentum);
}

GradCheckResult gradient_check(Network<double>& net, const Vector<double>& input, int label, double h,
                               const GradientTamper& tamper) {
  const Matrix<double> x = input;
  const std::array<int, 1> labels{label};
  Gradients<double> analytic;
  net.compute_gradients(x, labels, nullptr, analytic);
  if (tamper) tamper(analytic);

  auto loss = [&] { return softmax_xent_forward(net.logits(x), labels).loss; };
  GradCheckResult result;
  Index flat = 0;
  auto params = net.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Index i = 0; i < params[p].size(); ++i, ++flat) {
      const double original = params[p][i];
      params[p][i] = original + h;
      const double up = loss();
      params[p][i] = original - h;
      const double down = loss();
      params[p][i] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > result.max_relative_error || result.worst_parameter < 0) {
        result.max_relative_error = rel;
        result.worst_parameter = flat;
      }
    }
  }
  result.parameters_checked = flat;
  return result;
}

#define DEEPCOUGH_INSTANTIATE(S)                                                                              \
  template struct Tensor<S>;                                                                                  \
  template struct Conv2D<S>;                                                                                  \
  template struct Dense<S>;                                                                                   \
  template Index layer_input_size<S>(const Layer<S>&);                                                        \
  template Index layer_output_size<S>(const Layer<S>&);                                                       \
  template Matrix<S> conv2d_forward(const Conv2D<S>&, const Matrix<S>&);                                      \
  template Tensor<S> conv2d_forward(const Conv2D<S>&, const Tensor<S>&);                                      \
  template LayerGrad<S> conv2d_backward(const Conv2D<S>&, const Matrix<S>&, const Matrix<S>&);                \
  template Matrix<S> maxpool_forward(const MaxPool&, const Matrix<S>&);                                       \
  template Tensor<S> maxpool_forward(const MaxPool&, const Tensor<S>&);                                       \
  template Matrix<S> maxpool_backward(const MaxPool&, const Matrix<S>&, const Matrix<S>&);                    \
  template Matrix<S> relu_forward(const Matrix<S>&);                                                          \
  template Matrix<S> relu_backward(const Matrix<S>&, const Matrix<S>&);                                       \
  template Matrix<S> dense_forward(const Dense<S>&, const Matrix<S>&);                                        \
  template LayerGrad<S> dense_backward(const Dense<S>&, const Matrix<S>&, const Matrix<S>&);                  \
  template DropoutResult<S> dropout_forward(const Dropout&, const Matrix<S>&, Rng*);                          \
  template Matrix<S> dropout_backward(const Matrix<S>&, const Matrix<S>&);                                    \
  template Matrix<S> softmax(const Matrix<S>&);                                                               \
  template SoftmaxXent<S> softmax_xent_forward(const Matrix<S>&, std::span<const int>);                       \
  template Matrix<S> softmax_xent_backward(const Matrix<S>&, std::span<const int>);                           \
  template class Network<S>;                                                                                  \
  template class SgdMomentum<S>;

DEEPCOUGH_INSTANTIATE(float)
DEEPCOUGH_INSTANTIATE(double)

template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;

}  // namespace deepcough::nn

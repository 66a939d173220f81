#include <cmath>

#include "deepcough/cnn_model.hpp"
#include "deepcough/tensor_nn.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace deepcough;
using namespace deepcough::nn;
using test_support::error_code_of;

namespace {

Matrix<double> random_matrix(Index rows, Index cols, Rng& rng) {
  Matrix<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Conv2D<double> random_conv(Shape3 in, Index filters, Index kh, Index kw, Rng& rng) {
  Conv2D<double> c(in, filters, kh, kw);
  c.weights = random_matrix(c.weights.rows(), c.weights.cols(), rng);
  c.biases = random_matrix(filters, 1, rng);
  return c;
}

// Quadruple loop over (filter, row, col, tap); input laid out (c, h, w) row-major.
Vector<double> naive_conv(const Conv2D<double>& l, const Vector<double>& x) {
  const Shape3 in = l.input, out = l.output();
  Vector<double> y(out.size());
  for (Index f = 0; f < l.filters; ++f)
    for (Index i = 0; i < out.height; ++i)
      for (Index j = 0; j < out.width; ++j) {
        double acc = l.biases[f];
        for (Index c = 0; c < in.channels; ++c)
          for (Index a = 0; a < l.kernel_h; ++a)
            for (Index b = 0; b < l.kernel_w; ++b)
              acc += l.weights(f, (c * l.kernel_h + a) * l.kernel_w + b) *
                     x[(c * in.height + i + a) * in.width + j + b];
        y[(f * out.height + i) * out.width + j] = acc;
      }
  return y;
}

double max_rel(const Matrix<double>& a, const Matrix<double>& n) {
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - n.data()[i]) /
                                std::max({std::abs(a.data()[i]), std::abs(n.data()[i]), 1e-8}));
  return worst;
}

// Central differences of f over every entry of m.
template <typename F>
Matrix<double> numeric_grad(Matrix<double>& m, F&& f, double h = 1e-5) {
  Matrix<double> g(m.rows(), m.cols());
  for (Index i = 0; i < m.size(); ++i) {
    const double orig = m.data()[i];
    m.data()[i] = orig + h;
    const double up = f();
    m.data()[i] = orig - h;
    const double down = f();
    m.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("conv2d forward equals the naive loop") {
  Rng rng(1);
  const auto single = random_conv({1, 5, 5}, 1, 3, 3, rng);
  const Vector<double> x = random_matrix(25, 1, rng);
  CHECK((conv2d_forward(single, Matrix<double>(x)) - naive_conv(single, x)).cwiseAbs().maxCoeff() < 1e-12);

  const auto multi = random_conv({2, 7, 6}, 3, 3, 2, rng);
  const Matrix<double> batch = random_matrix(multi.input.size(), 4, rng);
  const Matrix<double> y = conv2d_forward(multi, batch);
  for (Index b = 0; b < 4; ++b)
    CHECK((y.col(b) - naive_conv(multi, batch.col(b))).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("1x1 unit kernel is the identity") {
  Conv2D<double> c({1, 4, 3}, 1, 1, 1);
  c.weights.setOnes();
  c.biases.setZero();
  Rng rng(2);
  const Matrix<double> x = random_matrix(12, 2, rng);
  CHECK(conv2d_forward(c, x) == x);
}

TEST_CASE("conv2d shapes and errors") {
  Conv2D<float> c({1, 64, 16}, 16, 9, 3);
  CHECK(c.output() == Shape3{16, 56, 14});
  const Tensor<float> t = conv2d_forward(c, Tensor<float>::zeros({1, 64, 16}));
  CHECK(t.shape == std::vector<Index>{16, 56, 14});
  CHECK(error_code_of([] { Conv2D<float>({1, 4, 4}, 1, 5, 1); }) == ErrorCode::ShapeMismatch);
  CHECK(error_code_of([&] { conv2d_forward(c, Matrix<float>(Matrix<float>::Zero(10, 1))); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("conv2d backward") {
  Rng rng(3);
  auto conv = random_conv({2, 6, 5}, 3, 3, 2, rng);
  Matrix<double> x = random_matrix(conv.input.size(), 2, rng);
  const Matrix<double> g = random_matrix(conv.output().size(), 2, rng);

  const LayerGrad<double> zero = conv2d_backward(conv, x, Matrix<double>(Matrix<double>::Zero(g.rows(), g.cols())));
  CHECK(zero.input.isZero());
  CHECK(zero.weights.isZero());
  CHECK(zero.biases.isZero());

  const LayerGrad<double> a = conv2d_backward(conv, x, g);
  const Index plane = conv.output().height * conv.output().width;
  for (Index f = 0; f < conv.filters; ++f) CHECK(a.biases[f] == doctest::Approx(g.middleRows(f * plane, plane).sum()));

  auto loss = [&] { return (conv2d_forward(conv, x).array() * g.array()).sum(); };
  CHECK(max_rel(a.input, numeric_grad(x, loss)) < 1e-4);
  CHECK(max_rel(a.weights, numeric_grad(conv.weights, loss)) < 1e-4);
  Matrix<double> b = conv.biases;
  auto bias_loss = [&] {
    conv.biases = b;
    return loss();
  };
  CHECK(max_rel(a.biases, numeric_grad(b, bias_loss)) < 1e-4);
}

TEST_CASE("max pooling") {
  const MaxPool pool{{1, 2, 1}, 2, 1};
  Matrix<double> x(2, 1);
  x << 3, 1;
  CHECK(maxpool_forward(pool, x)(0, 0) == 3);
  Matrix<double> g(1, 1);
  g << 1;
  Matrix<double> back = maxpool_backward(pool, x, g);
  CHECK(back(0, 0) == 1);
  CHECK(back(1, 0) == 0);
  x << 2, 2;
  back = maxpool_backward(pool, x, g);
  CHECK(back(0, 0) == 1);
  CHECK(back(1, 0) == 0);

  CHECK((MaxPool{{16, 56, 14}, 2, 1}.output() == Shape3{16, 28, 14}));
  CHECK((MaxPool{{16, 24, 12}, 2, 1}.output() == Shape3{16, 12, 12}));
}

TEST_CASE("relu has zero subgradient at zero") {
  Matrix<double> x(3, 1);
  x << -1, 0, 2;
  const Matrix<double> y = relu_forward(x);
  CHECK(y(0, 0) == 0);
  CHECK(y(2, 0) == 2);
  const Matrix<double> g = relu_backward(x, Matrix<double>(Matrix<double>::Ones(3, 1)));
  CHECK(g(0, 0) == 0);
  CHECK(g(1, 0) == 0);
  CHECK(g(2, 0) == 1);
}

TEST_CASE("dense backward is exact") {
  Rng rng(4);
  Dense<double> d(5, 3);
  d.weights = random_matrix(3, 5, rng);
  d.biases = random_matrix(3, 1, rng);
  Matrix<double> x = random_matrix(5, 4, rng);
  const Matrix<double> g = random_matrix(3, 4, rng);
  const LayerGrad<double> a = dense_backward(d, x, g);
  auto loss = [&] { return (dense_forward(d, x).array() * g.array()).sum(); };
  CHECK(max_rel(a.input, numeric_grad(x, loss)) < 1e-7);
  CHECK(max_rel(a.weights, numeric_grad(d.weights, loss)) < 1e-7);
}

TEST_CASE("inverted dropout") {
  Rng rng(5);
  const Matrix<double> x = random_matrix(100, 3, rng);
  CHECK(dropout_forward(Dropout{100, 0.5}, x, nullptr).output == x);
  Rng r0(6);
  CHECK(dropout_forward(Dropout{100, 0.0}, x, &r0).output == x);

  Rng a(7), b(7);
  const auto da = dropout_forward(Dropout{100, 0.5}, x, &a);
  const auto db = dropout_forward(Dropout{100, 0.5}, x, &b);
  CHECK(da.output == db.output);
  for (Index i = 0; i < da.mask.size(); ++i) CHECK((da.mask.data()[i] == 0.0 || da.mask.data()[i] == 2.0));

  // The kept fraction is close to 1 - p and the expectation is preserved.
  const Matrix<double> ones = Matrix<double>::Ones(20000, 1);
  Rng c(8);
  const double mean = dropout_forward(Dropout{20000, 0.5}, ones, &c).output.mean();
  CHECK(mean == doctest::Approx(1.0).epsilon(0.03));
  CHECK(error_code_of([&] { dropout_forward(Dropout{100, 1.0}, x, &c); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("softmax and cross-entropy") {
  const Matrix<double> p = softmax(Matrix<double>(Matrix<double>::Zero(2, 1)));
  CHECK(p(0, 0) == 0.5);
  CHECK(p(1, 0) == 0.5);

  Rng rng(9);
  Matrix<double> logits = random_matrix(2, 6, rng) * 30.0;
  logits(0, 0) = 800.0;
  const Matrix<double> probs = softmax(logits);
  for (Index j = 0; j < probs.cols(); ++j) CHECK(std::abs(probs.col(j).sum() - 1.0) < 1e-9);
  CHECK(probs.allFinite());

  Matrix<double> z = random_matrix(2, 5, rng);
  const std::vector<int> labels{0, 1, 1, 0, 1};
  const Matrix<double> analytic = softmax_xent_backward(softmax_xent_forward(z, labels).probs, labels);
  auto loss = [&] { return softmax_xent_forward(z, labels).loss; };
  CHECK(max_rel(analytic, numeric_grad(z, loss)) < 1e-4);
  for (Index j = 0; j < 5; ++j) {
    const Matrix<double> q = softmax(z);
    CHECK(q(0, j) > 0.0);
    CHECK(q(0, j) < 1.0);
  }
}

TEST_CASE("sgd with momentum") {
  Vector<double> theta = Vector<double>::Zero(1), v = Vector<double>::Zero(1), g = Vector<double>::Ones(1);
  sgd_momentum_step(theta, g, v, 0.1, 0.0);
  CHECK(theta[0] == doctest::Approx(-0.1));

  theta.setConstant(0.3);
  v.setZero();
  sgd_momentum_step(theta, Vector<double>::Zero(1), v, 0.1, 0.9);
  CHECK(theta[0] == 0.3);

  theta.setZero();
  v.setZero();
  sgd_momentum_step(theta, g, v, 0.001, 0.9);
  CHECK(v[0] == doctest::Approx(-0.001).epsilon(1e-12));
  sgd_momentum_step(theta, g, v, 0.001, 0.9);
  CHECK(v[0] == doctest::Approx(-0.0019).epsilon(1e-12));
  CHECK(theta[0] == doctest::Approx(-0.0029).epsilon(1e-12));

  Vector<double> wrong = Vector<double>::Zero(2);
  CHECK(error_code_of([&] { sgd_momentum_step(theta, wrong, v, 0.1, 0.9); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("sgd configuration defaults and validation") {
  const SgdConfig c;
  CHECK(c.learning_rate == 0.001);
  CHECK(c.momentum == 0.9);
  CHECK(c.batch_size == 20);
  CHECK(c.epochs == 50);
  SgdConfig bad;
  bad.momentum = 1.0;
  CHECK(error_code_of([&] { bad.validate(); }) == ErrorCode::InvalidArgument);
  bad = {};
  bad.learning_rate = 0.0;
  CHECK(error_code_of([&] { bad.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("gradient check on the reduced network and a linear one") {
  Network<double> net = build_network<double>(reduced_architecture(), 42);
  Rng rng(11);
  const Vector<double> x = random_matrix(net.input_size(), 1, rng);
  const GradCheckResult r = gradient_check(net, x, 1);
  CHECK(r.parameters_checked == net.parameter_count());
  CHECK(r.max_relative_error < 1e-4);

  // Off-by-one: every conv1 weight gradient takes its neighbour's value.
  const GradCheckResult bad = gradient_check(net, x, 1, 1e-5, [](Gradients<double>& g) {
    Vector<double>& w = g.front();
    for (Index i = 0; i + 1 < w.size(); ++i) w[i] = w[i + 1];
  });
  CHECK(bad.max_relative_error > 1e-2);

  Network<double> linear;
  Dense<double> d(6, 2);
  d.weights = random_matrix(2, 6, rng);
  d.biases = random_matrix(2, 1, rng);
  linear.layers.emplace_back(d);
  CHECK(gradient_check(linear, random_matrix(6, 1, rng), 0).max_relative_error < 1e-7);
}

TEST_CASE("one small step lowers the loss on a linear toy problem") {
  Rng rng(12);
  Network<double> net;
  Dense<double> d(3, 2);
  d.weights = random_matrix(2, 3, rng);
  d.biases.setZero();
  net.layers.emplace_back(d);
  const Matrix<double> x = random_matrix(3, 20, rng);
  std::vector<int> y(20);
  for (Index j = 0; j < 20; ++j) y[static_cast<std::size_t>(j)] = x(0, j) > 0 ? 0 : 1;

  SgdConfig cfg;
  cfg.learning_rate = 1e-4;
  cfg.momentum = 0.0;
  SgdMomentum<double> opt(net, cfg);
  Gradients<double> g;
  const double before = net.compute_gradients(x, y, nullptr, g);
  opt.step(net, g);
  const double after = softmax_xent_forward(net.logits(x), y).loss;
  CHECK(after < before);
}

TEST_CASE("deepcough shape chain and parameter count") {
  const CnnModel m = build_deepcough(42);
  const auto& layers = m.network.layers;
  REQUIRE(layers.size() == 13);
  const auto& conv1 = std::get<Conv2D<float>>(layers[0]);
  const auto& pool1 = std::get<MaxPool>(layers[2]);
  const auto& conv2 = std::get<Conv2D<float>>(layers[3]);
  const auto& pool2 = std::get<MaxPool>(layers[5]);
  const auto& fc1 = std::get<Dense<float>>(layers[6]);
  const auto& fc2 = std::get<Dense<float>>(layers[9]);
  const auto& fc3 = std::get<Dense<float>>(layers[12]);
  CHECK(conv1.input == Shape3{1, 64, 16});
  CHECK(conv1.output() == Shape3{16, 56, 14});
  CHECK(pool1.output() == Shape3{16, 28, 14});
  CHECK(conv2.output() == Shape3{16, 24, 12});
  CHECK(pool2.output() == Shape3{16, 12, 12});
  CHECK(fc1.inputs() == 2304);
  CHECK(fc1.outputs() == 256);
  CHECK(fc2.outputs() == 256);
  CHECK(fc3.outputs() == 2);
  CHECK(std::get<Dropout>(layers[8]).p == 0.5);
  CHECK(std::get<Dropout>(layers[11]).p == 0.5);

  const Index expected = oracles::deepcough_parameter_count();
  CHECK(expected == 660690);
  CHECK(m.network.parameter_count() == expected);
  CHECK(kDeepCoughParameterCount == expected);
  Index counted = 0;
  for (const auto& p : m.network.parameters()) counted += p.size();
  CHECK(counted == expected);
}

TEST_CASE("initialization is seeded") {
  const CnnModel a = build_deepcough(7), b = build_deepcough(7), c = build_deepcough(8);
  const auto pa = a.network.parameters(), pb = b.network.parameters(), pc = c.network.parameters();
  bool all_same = true, any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    all_same = all_same && pa[i] == pb[i];
    any_diff = any_diff || pa[i] != pc[i];
  }
  CHECK(all_same);
  CHECK(any_diff);

  Rng rng(13);
  Matrix<float> x(1024, 3);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.normal());
  const Matrix<float> p = a.network.predict(x);
  for (Index j = 0; j < 3; ++j) CHECK(std::abs(static_cast<double>(p(0, j)) + p(1, j) - 1.0) < 1e-6);
  CHECK(a.network.predict(x) == p);
}

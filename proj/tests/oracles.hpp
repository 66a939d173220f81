#ifndef DEEPCOUGH_TESTS_ORACLES_HPP
#define DEEPCOUGH_TESTS_ORACLES_HPP

// Slow, obviously-correct reference computations. None of them call into the
// library code they are used to check.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include "deepcough/baselines.hpp"

namespace oracles {

inline constexpr double kPi = std::numbers::pi;

inline std::vector<std::complex<double>> direct_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      acc += x[t] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k * t % n) / static_cast<double>(n));
    out[k] = acc;
  }
  return out;
}

// MFCCs of one frame by direct sums: no FFT, no precomputed matrices.
inline std::vector<double> brute_force_mfcc(const std::vector<float>& x, int sr) {
  const int n = static_cast<int>(x.size());
  int n_fft = 1;
  while (n_fft <= n) n_fft *= 2;

  std::vector<double> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double pre = i == 0 ? x[0] : x[static_cast<std::size_t>(i)] - 0.97 * x[static_cast<std::size_t>(i - 1)];
    y[static_cast<std::size_t>(i)] = pre * (0.5 - 0.5 * std::cos(2.0 * kPi * i / n));
  }

  const int bins = n_fft / 2 + 1;
  std::vector<double> power(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) {
    double re = 0.0, im = 0.0;
    for (int t = 0; t < n; ++t) {
      const double ang = 2.0 * kPi * static_cast<double>((static_cast<long>(k) * t) % n_fft) / n_fft;
      re += y[static_cast<std::size_t>(t)] * std::cos(ang);
      im -= y[static_cast<std::size_t>(t)] * std::sin(ang);
    }
    power[static_cast<std::size_t>(k)] = re * re + im * im;
  }

  const int m = 26;
  const double top = 2595.0 * std::log10(1.0 + (sr / 2.0) / 700.0);
  auto edge = [&](int i) { return 700.0 * (std::pow(10.0, top * i / (m + 1) / 2595.0) - 1.0); };
  std::vector<double> log_e(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    const double lo = edge(j), c = edge(j + 1), hi = edge(j + 2);
    double e = 0.0;
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sr / n_fft;
      double w = 0.0;
      if (f > lo && f <= c) w = (f - lo) / (c - lo);
      if (f > c && f < hi) w = (hi - f) / (hi - c);
      e += w * power[static_cast<std::size_t>(k)];
    }
    log_e[static_cast<std::size_t>(j)] = std::log(e + 1e-10);
  }

  std::vector<double> c(13);
  for (int k = 0; k < 13; ++k) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += log_e[static_cast<std::size_t>(i)] * std::cos(kPi * k * (2 * i + 1) / (2.0 * m));
    c[static_cast<std::size_t>(k)] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / m);
  }
  return c;
}

// log of the sum over every state path that enters before frame 0 and
// leaves after the last frame.
inline double enumerate_paths(const deepcough::HmmModel& m, const Eigen::MatrixXd& frames) {
  const Eigen::Index t_len = frames.rows(), e_len = m.emitting(), exit = m.n_states() - 1;
  double total = 0.0;
  std::vector<Eigen::Index> path(static_cast<std::size_t>(t_len), 1);
  std::function<void(Eigen::Index, double)> walk = [&](Eigen::Index t, double p) {
    const Eigen::Index prev = t == 0 ? 0 : path[static_cast<std::size_t>(t - 1)];
    if (t == t_len) {
      total += p * m.transitions(prev, exit);
      return;
    }
    for (Eigen::Index s = 1; s <= e_len; ++s) {
      const double a = m.transitions(prev, s);
      if (a == 0.0) continue;
      path[static_cast<std::size_t>(t)] = s;
      const deepcough::DiagonalGmm& g = m.emissions[static_cast<std::size_t>(s - 1)];
      double b = 0.0;
      for (Eigen::Index k = 0; k < g.components(); ++k) {
        double dens = g.weights[k];
        for (Eigen::Index d = 0; d < g.dimension(); ++d) {
          const double v = g.variances(d, k), diff = frames(t, d) - g.means(d, k);
          dens *= std::exp(-0.5 * diff * diff / v) / std::sqrt(2.0 * kPi * v);
        }
        b += dens;
      }
      walk(t + 1, p * a * b);
    }
  };
  walk(0, 1.0);
  return std::log(total);
}

// Probability that a random positive outscores a random negative, ties half.
inline double mann_whitney(const std::vector<double>& scores, const std::vector<deepcough::Label>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != deepcough::Label::Cough) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != deepcough::Label::Speech) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Weights plus biases of every trainable layer, counted from the layer
// hyperparameters alone.
inline long deepcough_parameter_count() {
  const long conv1 = 16 * (1 * 9 * 3) + 16;
  const long conv2 = 16 * (16 * 5 * 3) + 16;
  const long fc1 = 256 * (16 * 12 * 12) + 256;
  const long fc2 = 256 * 256 + 256;
  const long fc3 = 2 * 256 + 2;
  return conv1 + conv2 + fc1 + fc2 + fc3;
}

}  // namespace oracles

#endif  // DEEPCOUGH_TESTS_ORACLES_HPP

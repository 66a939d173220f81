#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "deepcough/baselines.hpp"
#include "deepcough/model_file.hpp"

namespace deepcough {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

double log_sum(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((v.array() - m).exp().sum());
}

Eigen::MatrixXd log_transitions(const HmmModel& model) { return model.transitions.array().log().matrix(); }

// T x E emission log-densities.
Eigen::MatrixXd emission_table(const HmmModel& model, const Eigen::MatrixXd& frames) {
  Eigen::MatrixXd b(frames.rows(), model.emitting());
  for (Eigen::Index t = 0; t < frames.rows(); ++t)
    for (Eigen::Index e = 0; e < model.emitting(); ++e)
      b(t, e) = model.emissions[static_cast<std::size_t>(e)].log_density(frames.row(t).transpose());
  return b;
}

// alpha(t, e) = log p(o_1..o_t, s_t = e + 1).
Eigen::MatrixXd forward(const Eigen::MatrixXd& log_a, const Eigen::MatrixXd& log_b) {
  const Eigen::Index t_len = log_b.rows(), e_len = log_b.cols();
  Eigen::MatrixXd alpha = Eigen::MatrixXd::Constant(t_len, e_len, kNegInf);
  if (t_len == 0) return alpha;
  for (Eigen::Index e = 0; e < e_len; ++e) alpha(0, e) = log_a(0, e + 1) + log_b(0, e);
  for (Eigen::Index t = 1; t < t_len; ++t)
    for (Eigen::Index j = 0; j < e_len; ++j) {
      double acc = kNegInf;
      for (Eigen::Index i = std::max<Eigen::Index>(0, j - 2); i <= j; ++i)
        acc = log_add(acc, alpha(t - 1, i) + log_a(i + 1, j + 1));
      alpha(t, j) = acc + log_b(t, j);
    }
  return alpha;
}

// beta(t, e) = log p(o_{t+1}..o_T, exit | s_t = e + 1).
Eigen::MatrixXd backward(const Eigen::MatrixXd& log_a, const Eigen::MatrixXd& log_b) {
  const Eigen::Index t_len = log_b.rows(), e_len = log_b.cols();
  const Eigen::Index exit = e_len + 1;
  Eigen::MatrixXd beta = Eigen::MatrixXd::Constant(t_len, e_len, kNegInf);
  if (t_len == 0) return beta;
  for (Eigen::Index e = 0; e < e_len; ++e) beta(t_len - 1, e) = log_a(e + 1, exit);
  for (Eigen::Index t = t_len - 2; t >= 0; --t)
    for (Eigen::Index i = 0; i < e_len; ++i) {
      double acc = kNegInf;
      for (Eigen::Index j = i; j <= std::min(e_len - 1, i + 2); ++j)
        acc = log_add(acc, log_a(i + 1, j + 1) + log_b(t + 1, j) + beta(t + 1, j));
      beta(t, i) = acc;
    }
  return beta;
}

double terminate(const Eigen::MatrixXd& log_a, const Eigen::MatrixXd& alpha) {
  if (alpha.rows() == 0) return kNegInf;
  const Eigen::Index e_len = alpha.cols();
  double ll = kNegInf;
  for (Eigen::Index e = 0; e < e_len; ++e) ll = log_add(ll, alpha(alpha.rows() - 1, e) + log_a(e + 1, e_len + 1));
  return ll;
}

void check_topology(const HmmConfig& cfg) {
  if (cfg.n_states < 3) throw Error(ErrorCode::InvalidArgument, "an HMM needs at least one emitting state");
  if (cfg.components < 1) throw Error(ErrorCode::InvalidArgument, "a GMM needs at least one component");
  if (!(cfg.variance_floor > 0.0)) throw Error(ErrorCode::InvalidArgument, "variance floor must be positive");
}

Eigen::MatrixXd initial_transitions(Eigen::Index n) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  const Eigen::Index exit = n - 1;
  const double entry[] = {0.9, 0.1};
  const double moves[] = {0.6, 0.3, 0.1};
  for (Eigen::Index i = 0; i < exit; ++i) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!hmm_transition_allowed(n, i, j)) continue;
      a(i, j) = i == 0 ? entry[j - 1] : moves[j - i];
      total += a(i, j);
    }
    a.row(i) /= total;
  }
  a(exit, exit) = 1.0;
  return a;
}

// Lloyd's algorithm from k distinct seeded starting points; ties go to the
// lower component index.
DiagonalGmm fit_state_gmm(const Eigen::MatrixXd& x, const Eigen::VectorXd& fallback_var, const HmmConfig& cfg,
                          Rng rng) {
  const Eigen::Index d = x.rows(), m = x.cols(), k = cfg.components;
  const Eigen::Index k_eff = std::min(k, m);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = i;
  rng.shuffle(idx);
  Eigen::MatrixXd centroids(d, k_eff);
  for (Eigen::Index c = 0; c < k_eff; ++c) centroids.col(c) = x.col(idx[static_cast<std::size_t>(c)]);

  std::vector<Eigen::Index> assign(static_cast<std::size_t>(m), 0);
  for (int it = 0; it < cfg.kmeans_iters; ++it) {
    for (Eigen::Index i = 0; i < m; ++i) {
      Eigen::Index best = 0;
      double best_d = (x.col(i) - centroids.col(0)).squaredNorm();
      for (Eigen::Index c = 1; c < k_eff; ++c) {
        const double dist = (x.col(i) - centroids.col(c)).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      assign[static_cast<std::size_t>(i)] = best;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(d, k_eff);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k_eff);
    for (Eigen::Index i = 0; i < m; ++i) {
      sums.col(assign[static_cast<std::size_t>(i)]) += x.col(i);
      counts[assign[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (Eigen::Index c = 0; c < k_eff; ++c)
      if (counts[c] > 0.0) centroids.col(c) = sums.col(c) / counts[c];
  }

  DiagonalGmm g;
  g.weights = Eigen::VectorXd::Zero(k);
  g.means.resize(d, k);
  g.variances.resize(d, k);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(k_eff);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(d, k_eff);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index c = assign[static_cast<std::size_t>(i)];
    counts[c] += 1.0;
    sq.col(c) += (x.col(i) - centroids.col(c)).array().square().matrix();
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index src = c < k_eff ? c : 0;
    g.means.col(c) = centroids.col(src);
    const Eigen::VectorXd var = counts[src] >= 2.0 ? Eigen::VectorXd(sq.col(src) / counts[src]) : fallback_var;
    g.variances.col(c) = var.array().max(cfg.variance_floor).matrix();
    // Add-one smoothing keeps every component alive.
    g.weights[c] = (c < k_eff ? counts[c] : 0.0) + 1.0;
  }
  g.weights /= g.weights.sum();
  return g;
}

struct Accumulators {
  Eigen::MatrixXd transitions;
  std::vector<Eigen::VectorXd> occupancy;  // per state, K
  std::vector<Eigen::MatrixXd> first;      // per state, D x K
  std::vector<Eigen::MatrixXd> second;     // per state, D x K

  Accumulators(Eigen::Index n, Eigen::Index e, Eigen::Index d, Eigen::Index k)
      : transitions(Eigen::MatrixXd::Zero(n, n)),
        occupancy(static_cast<std::size_t>(e), Eigen::VectorXd::Zero(k)),
        first(static_cast<std::size_t>(e), Eigen::MatrixXd::Zero(d, k)),
        second(static_cast<std::size_t>(e), Eigen::MatrixXd::Zero(d, k)) {}
};

double accumulate(const HmmModel& model, const Eigen::MatrixXd& log_a, const Eigen::MatrixXd& frames,
                  Accumulators& acc) {
  const Eigen::Index t_len = frames.rows(), e_len = model.emitting();
  const Eigen::Index exit = e_len + 1;
  std::vector<Eigen::MatrixXd> comp(static_cast<std::size_t>(e_len));
  Eigen::MatrixXd log_b(t_len, e_len);
  for (Eigen::Index e = 0; e < e_len; ++e) {
    const auto& g = model.emissions[static_cast<std::size_t>(e)];
    auto& c = comp[static_cast<std::size_t>(e)];
    c.resize(t_len, g.components());
    for (Eigen::Index t = 0; t < t_len; ++t) {
      c.row(t) = g.component_log_densities(frames.row(t).transpose()).transpose();
      log_b(t, e) = log_sum(c.row(t).transpose());
    }
  }
  const Eigen::MatrixXd alpha = forward(log_a, log_b);
  const Eigen::MatrixXd beta = backward(log_a, log_b);
  const double ll = terminate(log_a, alpha);
  if (!std::isfinite(ll)) throw Error(ErrorCode::NumericFailure, "training sequence has zero likelihood");

  for (Eigen::Index e = 0; e < e_len; ++e)
    acc.transitions(0, e + 1) += std::exp(alpha(0, e) + beta(0, e) - ll);
  for (Eigen::Index t = 0; t + 1 < t_len; ++t)
    for (Eigen::Index i = 0; i < e_len; ++i)
      for (Eigen::Index j = i; j <= std::min(e_len - 1, i + 2); ++j)
        acc.transitions(i + 1, j + 1) +=
            std::exp(alpha(t, i) + log_a(i + 1, j + 1) + log_b(t + 1, j) + beta(t + 1, j) - ll);
  for (Eigen::Index e = 0; e < e_len; ++e)
    acc.transitions(e + 1, exit) += std::exp(alpha(t_len - 1, e) + log_a(e + 1, exit) - ll);

  for (Eigen::Index e = 0; e < e_len; ++e) {
    const auto& c = comp[static_cast<std::size_t>(e)];
    auto& occ = acc.occupancy[static_cast<std::size_t>(e)];
    auto& s1 = acc.first[static_cast<std::size_t>(e)];
    auto& s2 = acc.second[static_cast<std::size_t>(e)];
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const double gamma = alpha(t, e) + beta(t, e) - ll;
      if (gamma == kNegInf) continue;
      const Eigen::VectorXd x = frames.row(t).transpose();
      for (Eigen::Index k = 0; k < c.cols(); ++k) {
        const double r = std::exp(gamma + c(t, k) - log_b(t, e));
        if (r == 0.0) continue;
        occ[k] += r;
        s1.col(k) += r * x;
        s2.col(k) += r * x.cwiseAbs2();
      }
    }
  }
  return ll;
}

void maximize(HmmModel& model, const Accumulators& acc, const HmmConfig& cfg) {
  const Eigen::Index n = model.n_states();
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double total = acc.transitions.row(i).sum();
    if (total > 0.0) model.transitions.row(i) = acc.transitions.row(i) / total;
  }
  for (Eigen::Index e = 0; e < model.emitting(); ++e) {
    auto& g = model.emissions[static_cast<std::size_t>(e)];
    const auto& occ = acc.occupancy[static_cast<std::size_t>(e)];
    const double total = occ.sum();
    if (!(total > 0.0)) continue;
    g.weights = occ / total;
    for (Eigen::Index k = 0; k < g.components(); ++k) {
      if (!(occ[k] > 0.0)) continue;
      const Eigen::VectorXd mean = acc.first[static_cast<std::size_t>(e)].col(k) / occ[k];
      const Eigen::VectorXd var =
          (acc.second[static_cast<std::size_t>(e)].col(k) / occ[k]).array() - mean.array().square();
      g.means.col(k) = mean;
      g.variances.col(k) = var.array().max(cfg.variance_floor).matrix();
    }
  }
}

void check_sequences(std::span<const MfccSequence> sequences, Eigen::Index min_len) {
  if (sequences.empty()) throw Error(ErrorCode::EmptyData, "no training sequences");
  const Eigen::Index d = sequences.front().coeffs.cols();
  for (const auto& s : sequences) {
    if (s.length() < min_len)
      throw Error(ErrorCode::SequenceTooShort, "sequence of " + std::to_string(s.length()) +
                                                   " frames is shorter than the " + std::to_string(min_len) +
                                                   "-frame minimum path");
    if (s.coeffs.cols() != d) throw Error(ErrorCode::ShapeMismatch, "sequences differ in feature dimension");
  }
}

Eigen::Index topology_min_length(Eigen::Index n) {
  const Eigen::Index e_len = n - 2;
  // dist[e]: fewest frames needed to be in emitting state e + 1.
  std::vector<Eigen::Index> dist(static_cast<std::size_t>(e_len), std::numeric_limits<Eigen::Index>::max());
  for (Eigen::Index j = 1; j <= e_len; ++j)
    if (hmm_transition_allowed(n, 0, j)) dist[static_cast<std::size_t>(j - 1)] = 1;
  for (Eigen::Index j = 1; j <= e_len; ++j)
    for (Eigen::Index i = 1; i < j; ++i)
      if (hmm_transition_allowed(n, i, j) && dist[static_cast<std::size_t>(i - 1)] != std::numeric_limits<Eigen::Index>::max())
        dist[static_cast<std::size_t>(j - 1)] =
            std::min(dist[static_cast<std::size_t>(j - 1)], dist[static_cast<std::size_t>(i - 1)] + 1);
  Eigen::Index best = std::numeric_limits<Eigen::Index>::max();
  for (Eigen::Index i = 1; i <= e_len; ++i)
    if (hmm_transition_allowed(n, i, n - 1)) best = std::min(best, dist[static_cast<std::size_t>(i - 1)]);
  return best;
}

}  // namespace

Eigen::VectorXd DiagonalGmm::component_log_densities(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd out(components());
  for (Eigen::Index k = 0; k < components(); ++k) {
    const auto var = variances.col(k).array();
    const double quad = ((x.array() - means.col(k).array()).square() / var).sum();
    out[k] = std::log(weights[k]) - 0.5 * (static_cast<double>(dimension()) * kLog2Pi + var.log().sum() + quad);
  }
  return out;
}

double DiagonalGmm::log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return log_sum(component_log_densities(x));
}

Eigen::Index HmmModel::min_length() const { return topology_min_length(n_states()); }

Eigen::Index hmm_min_length(Eigen::Index n_states) {
  if (n_states < 3) throw Error(ErrorCode::InvalidArgument, "an HMM needs at least one emitting state");
  return topology_min_length(n_states);
}

bool hmm_transition_allowed(Eigen::Index n_states, Eigen::Index from, Eigen::Index to) {
  const Eigen::Index exit = n_states - 1;
  if (from < 0 || to < 0 || from >= n_states || to >= n_states) return false;
  if (from == 0) return (to == 1 || to == 2) && to < exit;
  if (from == exit) return to == exit;
  return to >= from && to <= from + 2;
}

HmmModel hmm_init(std::span<const MfccSequence> sequences, const HmmConfig& cfg, std::uint64_t seed) {
  check_topology(cfg);
  const Eigen::Index n = cfg.n_states, e_len = n - 2;
  check_sequences(sequences, topology_min_length(n));
  const Eigen::Index d = sequences.front().coeffs.cols();

  Eigen::Index total = 0;
  for (const auto& s : sequences) total += s.length();
  Eigen::MatrixXd pooled(d, total);
  std::vector<Eigen::Index> state_of(static_cast<std::size_t>(total));
  std::vector<Eigen::Index> per_state(static_cast<std::size_t>(e_len), 0);
  Eigen::Index col = 0;
  for (const auto& s : sequences) {
    for (Eigen::Index t = 0; t < s.length(); ++t, ++col) {
      pooled.col(col) = s.coeffs.row(t).transpose();
      const Eigen::Index e = t * e_len / s.length();
      state_of[static_cast<std::size_t>(col)] = e;
      ++per_state[static_cast<std::size_t>(e)];
    }
  }
  const Eigen::VectorXd mean = pooled.rowwise().mean();
  const Eigen::VectorXd global_var = (pooled.colwise() - mean).array().square().rowwise().mean();
  if (global_var.maxCoeff() <= 0.0) throw Error(ErrorCode::DegenerateData, "all training frames are identical");

  HmmModel model;
  model.transitions = initial_transitions(n);
  const Rng root(seed, 0x484D4D);
  for (Eigen::Index e = 0; e < e_len; ++e) {
    Eigen::MatrixXd x;
    if (per_state[static_cast<std::size_t>(e)] == 0) {
      x = pooled;
    } else {
      x.resize(d, per_state[static_cast<std::size_t>(e)]);
      Eigen::Index c = 0;
      for (Eigen::Index i = 0; i < total; ++i)
        if (state_of[static_cast<std::size_t>(i)] == e) x.col(c++) = pooled.col(i);
    }
    model.emissions.push_back(fit_state_gmm(x, global_var, cfg, root.split(static_cast<std::uint64_t>(e))));
  }
  return model;
}

HmmModel hmm_baum_welch(HmmModel model, std::span<const MfccSequence> sequences, const HmmConfig& cfg,
                        BaumWelchTrace* trace) {
  check_topology(cfg);
  check_sequences(sequences, model.min_length());
  const Eigen::Index d = sequences.front().coeffs.cols();
  double prev = kNegInf;
  for (int it = 0;; ++it) {
    const Eigen::MatrixXd log_a = log_transitions(model);
    Accumulators acc(model.n_states(), model.emitting(), d, model.emissions.front().components());
    double ll = 0.0;
    for (const auto& s : sequences) ll += accumulate(model, log_a, s.coeffs, acc);
    if (trace) trace->log_likelihood.push_back(ll);
    if (it > 0 && ll - prev <= cfg.tol * std::abs(prev)) break;
    if (it == cfg.max_iters) break;
    maximize(model, acc, cfg);
    prev = ll;
  }
  return model;
}

HmmModel hmm_train(std::span<const MfccSequence> sequences, const HmmConfig& cfg, std::uint64_t seed,
                   BaumWelchTrace* trace) {
  return hmm_baum_welch(hmm_init(sequences, cfg, seed), sequences, cfg, trace);
}

double hmm_loglik(const HmmModel& model, const Eigen::MatrixXd& frames) {
  if (frames.rows() < model.min_length()) return kNegInf;
  const Eigen::MatrixXd log_a = log_transitions(model);
  return terminate(log_a, forward(log_a, emission_table(model, frames)));
}

double hmm_loglik(const HmmModel& model, const MfccSequence& seq) { return hmm_loglik(model, seq.coeffs); }

double hmm_prefix_loglik(const HmmModel& model, const Eigen::MatrixXd& frames) {
  if (frames.rows() == 0) return 0.0;
  const Eigen::MatrixXd alpha = forward(log_transitions(model), emission_table(model, frames));
  return log_sum(alpha.row(alpha.rows() - 1).transpose());
}

HmmDecision hmm_classify(const HmmModel& cough, const HmmModel& speech, const MfccSequence& seq) {
  const double lc = hmm_loglik(cough, seq);
  const double ls = hmm_loglik(speech, seq);
  double llr = 0.0;
  if (lc != ls) llr = lc - ls;  // equal infinities compare equal and stay a tie
  return {llr > 0.0 ? Label::Cough : Label::Speech, llr};
}

std::vector<std::uint8_t> encode_hmm(const HmmModel& model) {
  if (model.emissions.empty()) throw Error(ErrorCode::ShapeMismatch, "HMM has no emitting states");
  ContainerWriter container(1);
  ByteWriter& out = container.writer();
  const auto& first = model.emissions.front();
  out.u8(static_cast<std::uint8_t>(RecordKind::HmmGmm));
  out.u32(static_cast<std::uint32_t>(model.n_states()));
  out.u32(static_cast<std::uint32_t>(first.components()));
  out.u32(static_cast<std::uint32_t>(first.dimension()));
  out.f64_matrix(model.transitions);
  for (const auto& g : model.emissions) {
    out.f64_matrix(g.weights);
    out.f64_matrix(g.means);
    out.f64_matrix(g.variances);
  }
  return container.finish({}, 0.0);
}

HmmModel decode_hmm(std::span<const std::uint8_t> bytes) {
  ContainerReader container(bytes);
  if (container.record_count() != 1) throw Error(ErrorCode::ShapeMismatch, "HMM file has exactly one record");
  ByteReader& in = container.reader();
  if (static_cast<RecordKind>(in.u8()) != RecordKind::HmmGmm) throw Error(ErrorCode::ShapeMismatch, "not an HMM record");
  const Eigen::Index n = in.u32(), k = in.u32(), d = in.u32();
  if (n < 3 || k < 1 || d < 1 || n > 4096 || k > 4096 || d > 4096)
    throw Error(ErrorCode::TruncatedFile, "implausible HMM dimensions");
  HmmModel model;
  model.transitions = in.f64_matrix(n, n);
  for (Eigen::Index e = 0; e < n - 2; ++e) {
    DiagonalGmm g;
    g.weights = in.f64_matrix(k, 1);
    g.means = in.f64_matrix(d, k);
    g.variances = in.f64_matrix(d, k);
    model.emissions.push_back(std::move(g));
  }
  container.finish();
  return model;
}

}  // namespace deepcough

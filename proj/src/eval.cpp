#include "deepcough/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace deepcough {

double Confusion::sensitivity() const {
  return tp + fn == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double Confusion::specificity() const {
  return tn + fp == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : static_cast<double>(tn) / static_cast<double>(tn + fp);
}

Confusion confusion(std::span<const Label> truth, std::span<const Label> predicted) {
  if (truth.size() != predicted.size())
    throw Error(ErrorCode::LengthMismatch, std::to_string(truth.size()) + " labels but " +
                                               std::to_string(predicted.size()) + " predictions");
  if (truth.empty()) throw Error(ErrorCode::Empty, "nothing to evaluate");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool actual = truth[i] == Label::Cough;
    const bool said = predicted[i] == Label::Cough;
    if (actual && said) ++c.tp;
    else if (actual) ++c.fn;
    else if (said) ++c.fp;
    else ++c.tn;
  }
  return c;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw Error(ErrorCode::InvalidArgument, "NaN score at index " + std::to_string(i));
    if (labels[i] == Label::Cough) ++positives;
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0)
    throw Error(ErrorCode::OneClassOnly, "ROC needs both classes (" + std::to_string(positives) + " cough, " +
                                             std::to_string(negatives) + " speech)");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> roc{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] == Label::Cough ? tp : fp) += 1;
    roc.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                   static_cast<double>(tp) / static_cast<double>(positives), s});
  }
  return roc;
}

double auc(std::span<const RocPoint> roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) * 0.5;
  return area;
}

EvalReport make_report(std::string model, std::span<const Label> truth, std::span<const Label> predicted,
                       std::span<const double> scores) {
  EvalReport r;
  r.model = std::move(model);
  r.counts = confusion(truth, predicted);
  r.sensitivity = r.counts.sensitivity();
  r.specificity = r.counts.specificity();
  r.roc = roc_curve(scores, truth);
  r.auc = auc(r.roc);
  return r;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

}  // namespace

void write_table_csv(const std::filesystem::path& path, std::span<const EvalReport> rows, bool with_auc) {
  auto out = open_out(path);
  out << "model,sensitivity,specificity" << (with_auc ? ",auc" : "") << '\n';
  for (const auto& r : rows) {
    out << r.model << ',' << fixed(r.sensitivity, 6) << ',' << fixed(r.specificity, 6);
    if (with_auc) out << ',' << fixed(r.auc, 6);
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> roc) {
  auto out = open_out(path);
  out << "fpr,tpr,threshold\n";
  for (const auto& p : roc) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.9f,%.9f,%.9g\n", p.fpr, p.tpr, p.threshold);
    out << buf;
  }
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

std::string render_table(const std::string& title, std::span<const EvalReport> rows, bool with_auc) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.model.size());
  std::ostringstream os;
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  os << title << '\n';
  os << pad("Model", width) << "  Sensitivity  Specificity" << (with_auc ? "    AUC" : "") << '\n';
  for (const auto& r : rows) {
    os << pad(r.model, width) << "  " << pad(fixed(100.0 * r.sensitivity, 1), 11) << "  "
       << pad(fixed(100.0 * r.specificity, 1), 11);
    if (with_auc) os << "  " << fixed(r.auc, 3);
    os << '\n';
  }
  return os.str();
}

}  // namespace deepcough

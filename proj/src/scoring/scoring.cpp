#include "mvts/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "mvts/error.hpp"
#include "mvts/kernels.hpp"
#include "mvts/log.hpp"
#include "mvts/threads.hpp"

namespace mvts {

double anomaly_score(std::span<const float> x, std::span<const float> x_hat) {
  if (x.size() != x_hat.size() || x.empty()) {
    throw DimensionError("anomaly_score: window and reconstruction sizes differ or are empty");
  }
  return static_cast<double>(kernels::active<float>().abs_diff_sum(x.size(), x.data(), x_hat.data())) /
         static_cast<double>(x.size());
}

std::vector<double> score_windows(const ModelParams<float>& params, const WindowSet& ws,
                                  std::span<const std::size_t> indices, std::size_t threads,
                                  std::size_t batch_size) {
  if (ws.length != params.config.window_length || ws.channels != params.config.channels) {
    throw FormatError("windows are " + std::to_string(ws.length) + "x" + std::to_string(ws.channels) +
                      " but the model expects " + std::to_string(params.config.window_length) + "x" +
                      std::to_string(params.config.channels));
  }
  std::vector<double> out(indices.size());
  const std::size_t cells = ws.window_size();
  const std::size_t batches = (indices.size() + batch_size - 1) / batch_size;
  parallel_for(batches, threads, [&](std::size_t b) {
    NoGradGuard no_grad;
    const std::size_t begin = b * batch_size;
    const std::size_t end = std::min(indices.size(), begin + batch_size);
    std::vector<float> input((end - begin) * cells);
    for (std::size_t k = begin; k < end; ++k) {
      const auto w = ws.window(indices[k]);
      std::copy(w.begin(), w.end(), input.begin() + static_cast<std::ptrdiff_t>((k - begin) * cells));
    }
    const Tensor<float> x(Shape{end - begin, ws.length, ws.channels}, std::move(input));
    const auto recon = infer(x, params).reconstruction;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t offset = (k - begin) * cells;
      out[k] = anomaly_score(x.data().subspan(offset, cells), recon.data().subspan(offset, cells));
    }
  });
  return out;
}

ScoreSet score_set(const ModelParams<float>& params, const WindowSet& ws, std::span<const std::size_t> indices,
                   std::size_t threads) {
  const auto scores = score_windows(params, ws, indices, threads);
  ScoreSet out;
  out.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) out.push_back({indices[k], scores[k], ws.labels[indices[k]]});
  return out;
}

namespace {

std::pair<std::size_t, std::size_t> class_counts(const ScoreSet& scores) {
  std::size_t m = 0, n = 0;
  for (const auto& s : scores) {
    if (!std::isfinite(s.score)) throw UndefinedMetricError("score of window " + std::to_string(s.window_id) + " is not finite");
    (s.label ? m : n) += 1;
  }
  return {m, n};
}

void require_both_classes(std::size_t m, std::size_t n, const char* what) {
  if (m == 0 || n == 0) {
    throw UndefinedMetricError(std::string(what) + " needs both classes (anomalous: " + std::to_string(m) +
                               ", normal: " + std::to_string(n) + ")");
  }
}

}  // namespace

double auc(const ScoreSet& scores) {
  const auto [m, n] = class_counts(scores);
  require_both_classes(m, n, "AUC");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a].score < scores[b].score; });

  // Mid-ranks are half-integers, so the rank sum is exact in double.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]].score == scores[order[i]].score) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k)
      if (scores[order[k]].label) rank_sum += mid_rank;
    i = j + 1;
  }
  const double md = static_cast<double>(m);
  const double u = rank_sum - md * (md + 1.0) / 2.0;
  return u / (md * static_cast<double>(n));
}

double auc_variance(double a, std::size_t m, std::size_t n) {
  if (m == 0 || n == 0) throw UndefinedMetricError("AUC variance needs m, n >= 1");
  if (!(a >= 0.0 && a <= 1.0)) throw ParameterError("AUC must lie in [0, 1]");
  const double px = a / (2.0 - a);
  const double py = 2.0 * a * a / (1.0 + a);
  const double md = static_cast<double>(m), nd = static_cast<double>(n);
  const double var = (a * (1.0 - a) + (md - 1.0) * (px - a * a) + (nd - 1.0) * (py - a * a)) / (md * nd);
  return std::max(var, 0.0);
}

double auc_ci(double a, std::size_t m, std::size_t n) { return kZ95 * std::sqrt(auc_variance(a, m, n)); }

double proportion_ci(double a, std::size_t m, std::size_t n) {
  if (m + n == 0) throw UndefinedMetricError("proportion CI needs at least one window");
  if (!(a >= 0.0 && a <= 1.0)) throw ParameterError("proportion must lie in [0, 1]");
  return kZ95 * std::sqrt(std::max(0.0, a * (1.0 - a)) / static_cast<double>(m + n));
}

Confusion confusion_at(const ScoreSet& scores, double threshold) {
  Confusion c;
  for (const auto& s : scores) {
    const bool predicted = s.score > threshold;
    if (s.label) {
      (predicted ? c.tp : c.fn) += 1;
    } else {
      (predicted ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

ThresholdChoice select_threshold(const ScoreSet& scores) {
  const auto [m, n] = class_counts(scores);
  require_both_classes(m, n, "threshold selection");

  std::vector<std::pair<double, std::uint8_t>> sorted;
  sorted.reserve(scores.size());
  for (const auto& s : scores) sorted.emplace_back(s.score, s.label);
  std::sort(sorted.begin(), sorted.end());

  // Sweep candidates in ascending order; strict improvement keeps the lowest.
  std::size_t tp = m, tn = 0;  // at −∞ everything is predicted anomalous
  const double denom = static_cast<double>(m) * static_cast<double>(n);
  auto g_mean = [&] { return std::sqrt(static_cast<double>(tp) * static_cast<double>(tn) / denom); };
  ThresholdChoice best{-std::numeric_limits<double>::infinity(), g_mean(), false};
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) {
      if (sorted[j].second) {
        --tp;
      } else {
        ++tn;
      }
      ++j;
    }
    double candidate;
    if (j < sorted.size()) {
      const double lo = sorted[i].first, hi = sorted[j].first;
      candidate = std::midpoint(lo, hi);
      if (!(candidate < hi)) candidate = lo;
    } else {
      candidate = std::numeric_limits<double>::infinity();
    }
    const double g = g_mean();
    if (g > best.g_mean) best = {candidate, g, false};
    i = j;
  }
  if (best.g_mean == 0.0) {
    best.degenerate = true;
    warn("threshold selection: G-mean is 0 at every cut; returning the lowest sentinel");
  }
  return best;
}

ClassificationMetrics classification_metrics(const ScoreSet& scores, double threshold) {
  const auto [m, n] = class_counts(scores);
  require_both_classes(m, n, "classification metrics");
  ClassificationMetrics out;
  out.confusion = confusion_at(scores, threshold);
  const auto& c = out.confusion;
  auto ratio = [](std::size_t num, std::size_t den, const char* what) {
    if (den == 0) {
      warn(std::string("no windows predicted ") + what + "; precision defined as 0");
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  const double precision_anomalous = ratio(c.tp, c.tp + c.fp, "anomalous");
  const double precision_normal = ratio(c.tn, c.tn + c.fn, "normal");
  const double recall_anomalous = static_cast<double>(c.tp) / static_cast<double>(m);
  const double recall_normal = static_cast<double>(c.tn) / static_cast<double>(n);
  const double total = static_cast<double>(m + n);
  const double wm = static_cast<double>(m) / total, wn = static_cast<double>(n) / total;
  out.weighted_precision = wm * precision_anomalous + wn * precision_normal;
  out.weighted_recall = wm * recall_anomalous + wn * recall_normal;
  out.balanced_accuracy = 0.5 * (recall_anomalous + recall_normal);
  return out;
}

namespace {
nlohmann::json threshold_json(double t) {
  if (std::isinf(t)) return t > 0 ? "+inf" : "-inf";
  return t;
}
}  // namespace

nlohmann::json EvalReport::to_json() const {
  auto metric = [](const MetricWithCi& v) { return nlohmann::json{{"value", v.value}, {"ci95", v.ci}}; };
  return {
      {"threshold", threshold_json(threshold)},
      {"threshold_policy", policy == ThresholdPolicy::calibration ? "calibration" : "test"},
      {"calibration_g_mean", calibration_g_mean},
      {"weighted_precision", metric(precision)},
      {"weighted_recall", metric(recall)},
      {"balanced_accuracy", metric(balanced_accuracy)},
      {"auc", metric(auc)},
      {"m", m},
      {"n", n},
      {"confusion", {{"tp", confusion.tp}, {"fp", confusion.fp}, {"tn", confusion.tn}, {"fn", confusion.fn}}},
  };
}

EvalReport evaluate(const ScoreSet& calibration, const ScoreSet& test, ThresholdPolicy policy) {
  EvalReport report;
  report.policy = policy;
  const auto choice = select_threshold(policy == ThresholdPolicy::calibration ? calibration : test);
  report.threshold = choice.threshold;
  report.calibration_g_mean = choice.g_mean;

  const auto [m, n] = class_counts(test);
  report.m = m;
  report.n = n;
  const auto metrics = classification_metrics(test, choice.threshold);
  report.confusion = metrics.confusion;
  report.precision = {metrics.weighted_precision, proportion_ci(metrics.weighted_precision, m, n)};
  report.recall = {metrics.weighted_recall, proportion_ci(metrics.weighted_recall, m, n)};
  report.balanced_accuracy = {metrics.balanced_accuracy, proportion_ci(metrics.balanced_accuracy, m, n)};
  const double a = auc(test);
  report.auc = {a, auc_ci(a, m, n)};
  return report;
}

void write_scores_csv(const ScoreSet& scores, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCategory::runtime, "cannot write " + path.string());
  out << "window_id,score,label\n";
  char buf[64];
  for (const auto& s : scores) {
    const auto res = std::to_chars(buf, buf + sizeof buf, s.score);
    out << s.window_id << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << ','
        << static_cast<int>(s.label) << '\n';
  }
}

ScoreSet read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("window_id,score,label", 0) != 0) {
    throw FormatError(path.string() + ": expected header 'window_id,score,label'");
  }
  ScoreSet out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw FormatError(path.string() + ": row " + std::to_string(row) + " needs three columns");
    }
    ScoredWindow s;
    unsigned label = 0;
    const char* b = line.data();
    const auto r1 = std::from_chars(b, b + c1, s.window_id);
    const auto r2 = std::from_chars(b + c1 + 1, b + c2, s.score);
    const auto r3 = std::from_chars(b + c2 + 1, b + line.size(), label);
    if (r1.ec != std::errc() || r1.ptr != b + c1 || r2.ec != std::errc() || r2.ptr != b + c2 ||
        r3.ec != std::errc() || r3.ptr != b + line.size() || label > 1 || !std::isfinite(s.score)) {
      throw FormatError(path.string() + ": malformed row " + std::to_string(row) + ": '" + line + "'");
    }
    s.label = static_cast<std::uint8_t>(label);
    out.push_back(s);
  }
  return out;
}

}  // namespace mvts

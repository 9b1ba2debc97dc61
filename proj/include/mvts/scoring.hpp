#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvts/dataprep.hpp"
#include "mvts/model.hpp"

namespace mvts {

struct ScoredWindow {
  std::size_t window_id = 0;
  double score = 0.0;
  std::uint8_t label = 0;  // 1 = anomalous (seizure)
};

using ScoreSet = std::vector<ScoredWindow>;

/// Mean absolute error over every cell of the window.
double anomaly_score(std::span<const float> x, std::span<const float> x_hat);

/// Reconstruct each listed window in inference mode (no mask, no dropout)
/// and return its anomaly score. Windows are independent, so the result does
/// not depend on `threads`.
std::vector<double> score_windows(const ModelParams<float>& params, const WindowSet& windows,
                                  std::span<const std::size_t> indices, std::size_t threads = 1,
                                  std::size_t batch_size = 64);

ScoreSet score_set(const ModelParams<float>& params, const WindowSet& windows, std::span<const std::size_t> indices,
                   std::size_t threads = 1);

/// Mann–Whitney AUC via mid-ranks; ties count one half.
double auc(const ScoreSet& scores);

/// Hanley–McNeil variance with P_x = A/(2−A), P_y = 2A²/(1+A); m anomalous,
/// n normal. Negative rounding residue is clamped to 0.
double auc_variance(double a, std::size_t m, std::size_t n);
double auc_ci(double a, std::size_t m, std::size_t n);

/// 1.96·sqrt(A(1−A)/(m+n)).
double proportion_ci(double a, std::size_t m, std::size_t n);

inline constexpr double kZ95 = 1.96;

struct ThresholdChoice {
  double threshold = 0.0;  // may be ±infinity (sentinels)
  double g_mean = 0.0;
  bool degenerate = false;  // every candidate has G-mean 0
};

/// Candidates: −∞, midpoints of consecutive distinct scores, +∞. A window is
/// predicted anomalous iff score > threshold. Maximizes sqrt(TPR·TNR); ties go
/// to the lowest threshold.
ThresholdChoice select_threshold(const ScoreSet& scores);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

Confusion confusion_at(const ScoreSet& scores, double threshold);

struct ClassificationMetrics {
  Confusion confusion;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double balanced_accuracy = 0.0;
};

/// Support-weighted per-class precision/recall and balanced accuracy. A class
/// that is never predicted gets precision 0 (with a warning).
ClassificationMetrics classification_metrics(const ScoreSet& scores, double threshold);

enum class ThresholdPolicy { calibration, test };

struct MetricWithCi {
  double value = 0.0;
  double ci = 0.0;
};

struct EvalReport {
  double threshold = 0.0;
  ThresholdPolicy policy = ThresholdPolicy::calibration;
  double calibration_g_mean = 0.0;
  MetricWithCi precision, recall, balanced_accuracy, auc;
  std::size_t m = 0;  // anomalous windows scored
  std::size_t n = 0;  // normal windows scored
  Confusion confusion;

  nlohmann::json to_json() const;
};

/// Threshold from `calibration` (or from `test` under ThresholdPolicy::test),
/// metrics on `test`.
EvalReport evaluate(const ScoreSet& calibration, const ScoreSet& test, ThresholdPolicy policy);

void write_scores_csv(const ScoreSet& scores, const std::filesystem::path& path);
ScoreSet read_scores_csv(const std::filesystem::path& path);

}  // namespace mvts

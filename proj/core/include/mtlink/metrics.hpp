#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtlink/errors.hpp"

namespace mtlink {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct MetricsReport {
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  /// Absent when the labels contain a single class.
  std::optional<double> auc;
  ConfusionCounts confusion;
  std::size_t n_samples = 0;
};

/// Threshold scores at `threshold`, macro-average per-class precision, recall
/// and F1 over both classes (a class never predicted scores precision 0), and
/// compute AUC by the Mann-Whitney rank statistic with half credit for ties.
MetricsReport compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                              double threshold = 0.5);

/// AUC by average ranks; exact, O(N log N), ties get half credit.
std::optional<double> auc_rank(const std::vector<double>& scores, const std::vector<int>& labels);

/// Reference oracle: enumerate all positive-negative pairs.
std::optional<double> auc_bruteforce(const std::vector<double>& scores,
                                     const std::vector<int>& labels);

/// JSON object with every MetricsReport field (auc is null when undefined).
std::string metrics_to_json(const MetricsReport& report);

}  // namespace mtlink

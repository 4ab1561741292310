#include "mtlink/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>

namespace mtlink {

std::optional<double> auc_rank(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y == 1;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks over tie groups; rank sums of integers and half-integers
  // stay exact in doubles at this scale.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (labels[idx[t]] == 1) pos_rank_sum += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

std::optional<double> auc_bruteforce(const std::vector<double>& scores,
                                     const std::vector<int>& labels) {
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) (y == 1 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  double credit = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == 1) continue;
      if (scores[i] > scores[j])
        credit += 1.0;
      else if (scores[i] == scores[j])
        credit += 0.5;
    }
  }
  return credit / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricsReport compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                              double threshold) {
  if (scores.empty()) throw ContractError("compute_metrics: empty input");
  if (scores.size() != labels.size())
    throw ContractError("compute_metrics: scores and labels differ in length");

  MetricsReport r;
  r.n_samples = scores.size();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool truth = labels[i] == 1;
    if (pred && truth)
      ++r.confusion.tp;
    else if (pred && !truth)
      ++r.confusion.fp;
    else if (!pred && truth)
      ++r.confusion.fn;
    else
      ++r.confusion.tn;
  }

  auto safe_div = [](double num, double den) { return den == 0.0 ? 0.0 : num / den; };
  // Class 1 and class 0 treated symmetrically, then averaged.
  const double p1 = safe_div(r.confusion.tp, r.confusion.tp + r.confusion.fp);
  const double r1 = safe_div(r.confusion.tp, r.confusion.tp + r.confusion.fn);
  const double p0 = safe_div(r.confusion.tn, r.confusion.tn + r.confusion.fn);
  const double r0 = safe_div(r.confusion.tn, r.confusion.tn + r.confusion.fp);
  const double f1_1 = safe_div(2.0 * p1 * r1, p1 + r1);
  const double f1_0 = safe_div(2.0 * p0 * r0, p0 + r0);
  r.macro_precision = (p1 + p0) / 2.0;
  r.macro_recall = (r1 + r0) / 2.0;
  r.macro_f1 = (f1_1 + f1_0) / 2.0;
  r.auc = auc_rank(scores, labels);
  return r;
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["macro_precision"] = report.macro_precision;
  j["macro_recall"] = report.macro_recall;
  j["macro_f1"] = report.macro_f1;
  if (report.auc.has_value())
    j["auc"] = *report.auc;
  else
    j["auc"] = nullptr;
  j["confusion"] = {{"tp", report.confusion.tp},
                    {"fp", report.confusion.fp},
                    {"tn", report.confusion.tn},
                    {"fn", report.confusion.fn}};
  j["n_samples"] = report.n_samples;
  return j.dump();
}

}  // namespace mtlink

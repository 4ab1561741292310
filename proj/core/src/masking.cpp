#include "mtlink/masking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mtlink {

std::vector<double> token_importance(const AttentionMap& map,
                                     const std::vector<std::uint8_t>& valid_keys) {
  const Mat& w = map.weights;
  if (valid_keys.size() != w.cols)
    throw ShapeError("token_importance: key mask length does not match map columns");
  std::vector<double> scores(w.cols, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r)
    for (std::size_t c = 0; c < w.cols; ++c) scores[c] += w.at(r, c);
  for (std::size_t c = 0; c < w.cols; ++c)
    if (!valid_keys[c]) scores[c] = -std::numeric_limits<double>::infinity();
  return scores;
}

MaskPlan select_mask(const std::vector<double>& scores, double mask_ratio, std::size_t k_valid,
                     char target_platform) {
  if (mask_ratio < 0.0 || mask_ratio > 1.0)
    throw ContractError("select_mask: mask ratio must be in [0, 1]");
  if (k_valid > scores.size())
    throw ContractError("select_mask: k_valid exceeds score count");

  MaskPlan plan;
  plan.target_platform = target_platform;
  plan.n_mask = static_cast<std::size_t>(
      std::floor(mask_ratio * static_cast<double>(k_valid)));
  if (plan.n_mask == 0) return plan;

  // Valid positions are exactly those with finite scores.
  std::vector<std::size_t> idx;
  idx.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (std::isfinite(scores[i])) idx.push_back(i);
  if (plan.n_mask > idx.size())
    throw ContractError("select_mask: plan larger than the number of valid positions");

  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return a < b;
  });
  plan.indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(plan.n_mask));
  std::sort(plan.indices.begin(), plan.indices.end());
  return plan;
}

MaskPlan select_mask_random(const std::vector<std::uint8_t>& valid, double mask_ratio, Rng& rng,
                            char target_platform) {
  if (mask_ratio < 0.0 || mask_ratio > 1.0)
    throw ContractError("select_mask_random: mask ratio must be in [0, 1]");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i]) idx.push_back(i);

  MaskPlan plan;
  plan.target_platform = target_platform;
  plan.n_mask =
      static_cast<std::size_t>(std::floor(mask_ratio * static_cast<double>(idx.size())));
  for (std::size_t i = 0; i < plan.n_mask; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(
                                  rng.uniform_int(0, static_cast<std::int64_t>(idx.size() - i) - 1));
    std::swap(idx[i], idx[j]);
  }
  plan.indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(plan.n_mask));
  std::sort(plan.indices.begin(), plan.indices.end());
  return plan;
}

Tensor apply_mask(const Tensor& z, const MaskPlan& plan, const Tensor& mask_embedding) {
  if (plan.indices.empty()) return z;
  return replace_rows(z, plan.indices, mask_embedding);
}

}  // namespace mtlink

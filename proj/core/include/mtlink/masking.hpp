#pragma once

#include <cstdint>
#include <vector>

#include "mtlink/correlation_attention.hpp"
#include "mtlink/tensor.hpp"

namespace mtlink {

/// Token positions of one platform's sequence to replace with the learnable
/// mask embedding. Always floor(r * k_valid) valid positions, sorted.
struct MaskPlan {
  char target_platform = 'A';
  std::size_t n_mask = 0;
  std::vector<std::size_t> indices;
};

/// Attention received by each key position: the column sum of the map over
/// valid query rows. Padded key positions get -inf so they are never selected.
std::vector<double> token_importance(const AttentionMap& map,
                                     const std::vector<std::uint8_t>& valid_keys);

/// The floor(r * k_valid) valid positions with the smallest scores; ties break
/// toward the smaller index.
MaskPlan select_mask(const std::vector<double>& scores, double mask_ratio, std::size_t k_valid,
                     char target_platform);

/// Uniformly random plan of the same size (the random-masking ablation arm).
MaskPlan select_mask_random(const std::vector<std::uint8_t>& valid, double mask_ratio, Rng& rng,
                            char target_platform);

/// Replace the planned rows of Z with the learnable mask embedding; all other
/// rows pass through bit-equal. Gradient reaches the embedding from masked
/// rows only.
Tensor apply_mask(const Tensor& z, const MaskPlan& plan, const Tensor& mask_embedding);

}  // namespace mtlink

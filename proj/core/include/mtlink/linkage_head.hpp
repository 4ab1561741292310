#pragma once

#include <cstdint>
#include <vector>

#include "mtlink/tensor.hpp"

namespace mtlink {

/// Two-layer predictor 2d -> d -> 1 with relu between and a final sigmoid.
struct PredictorMLP {
  Tensor w1, b1;
  Tensor w2, b2;
};

PredictorMLP init_predictor(std::size_t d, Rng& rng);

struct LossWeights {
  double w_pos = 1.0;
  double w_neg = 1.0;
};

/// Inverse class frequency normalized to mean 1: w_pos = N/(2*N_pos),
/// w_neg = N/(2*N_neg).
LossWeights inverse_frequency_weights(std::size_t n_pos, std::size_t n_neg);

/// Mean over valid rows per side, concatenated: [mean_A ; mean_B] of size 2d.
Tensor pool_and_concat(const Tensor& h_a, const Tensor& h_b,
                       const std::vector<std::uint8_t>& valid_a,
                       const std::vector<std::uint8_t>& valid_b);

/// Linkage probability in (0,1). The decision label is 1 iff the probability
/// is at least 0.5.
Tensor predict(const Tensor& features, const PredictorMLP& mlp);

}  // namespace mtlink

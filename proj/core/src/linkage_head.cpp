#include "mtlink/linkage_head.hpp"

namespace mtlink {

PredictorMLP init_predictor(std::size_t d, Rng& rng) {
  PredictorMLP m;
  m.w1 = Tensor::randn({2 * d, d}, rng, 0.02, true);
  m.b1 = Tensor::zeros({d}, true);
  m.w2 = Tensor::randn({d, 1}, rng, 0.02, true);
  m.b2 = Tensor::zeros({1}, true);
  return m;
}

LossWeights inverse_frequency_weights(std::size_t n_pos, std::size_t n_neg) {
  if (n_pos == 0 || n_neg == 0)
    throw ContractError("inverse_frequency_weights: both classes must be present");
  const double n = static_cast<double>(n_pos + n_neg);
  return {n / (2.0 * static_cast<double>(n_pos)), n / (2.0 * static_cast<double>(n_neg))};
}

Tensor pool_and_concat(const Tensor& h_a, const Tensor& h_b,
                       const std::vector<std::uint8_t>& valid_a,
                       const std::vector<std::uint8_t>& valid_b) {
  return concat_last(masked_mean(h_a, valid_a), masked_mean(h_b, valid_b));
}

Tensor predict(const Tensor& features, const PredictorMLP& mlp) {
  const std::size_t din = mlp.w1.dim(0);
  if (features.size() != din)
    throw ShapeError("predict: feature size " + std::to_string(features.size()) +
                     " does not match predictor input " + std::to_string(din));
  auto f = features.rank() == 2 ? features : reshape(features, {1, din});
  auto hidden = relu(add(matmul(f, mlp.w1), mlp.b1));
  auto logit = add(matmul(hidden, mlp.w2), mlp.b2);
  return reshape(sigmoid(logit), {});
}

}  // namespace mtlink

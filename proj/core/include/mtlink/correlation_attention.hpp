#pragma once

#include <cstdint>
#include <vector>

#include "mtlink/encoders.hpp"
#include "mtlink/mat.hpp"
#include "mtlink/tensor.hpp"

namespace mtlink {

enum class Direction { AtoB, BtoA };

/// Head-averaged cross-attention weights of the last layer for one direction.
/// Rows are query positions, columns key positions; rows over valid keys are
/// stochastic and padded rows/columns are exactly zero.
struct AttentionMap {
  Direction direction = Direction::AtoB;
  Mat weights;
};

/// Per-layer parameters of one cross-attention direction: query and output
/// projections plus the post-residual layer norm. Keys and values are
/// projected once at the stack level and reused by every layer.
struct CrossAttnLayer {
  Tensor q_w, q_b;
  Tensor o_w, o_b;
  Tensor ln_g, ln_b;
};

struct CrossAttnDirection {
  Tensor q0_w, q0_b;  // initial query transformation of the residual stream
  Tensor k_w, k_b;    // key projection, applied once
  Tensor v_w, v_b;    // value projection, applied once
  std::vector<CrossAttnLayer> layers;
};

/// Bidirectional correlation attention block of L layers with independent
/// parameters per direction.
struct CorrelationAttentionBlock {
  std::size_t heads = 4;
  double dropout_rate = 0.1;
  CrossAttnDirection a_to_b;
  CrossAttnDirection b_to_a;
};

/// Initialization note: within a direction the key projection and every
/// layer's query projection start from the same N(0, 1/sqrt(d)) draw, so the
/// initial attention logits approximate dot-product similarity between the two
/// platforms' representations; the initial query transformation starts at the
/// identity. The maps therefore rank cross-platform co-occurrence before any
/// gradient reaches this block.
CorrelationAttentionBlock init_correlation_attention(std::size_t d, std::size_t layers,
                                                     std::size_t heads, double dropout_rate,
                                                     Rng& rng);

struct CrossAttnResult {
  Tensor q_a_out;  // [k_A × d]
  Tensor q_b_out;  // [k_B × d]
  AttentionMap map_ab;  // [k_A × k_B]
  AttentionMap map_ba;  // [k_B × k_A]
};

/// Run the L-layer bidirectional stack. Keys/values per direction are computed
/// once from the opposite platform's representations; each layer applies
/// residual multi-head cross-attention followed by layer norm. The returned
/// maps average the last layer's softmax probabilities over heads.
CrossAttnResult cross_attend_stack(const CorrelationAttentionBlock& cab, const Tensor& h_a,
                                   const Tensor& h_b, const std::vector<std::uint8_t>& valid_a,
                                   const std::vector<std::uint8_t>& valid_b, Rng* rng,
                                   bool training);

/// CSV export of one map: header row with key indices, one row per query
/// index. Values round-trip exactly.
void write_attention_map_csv(const AttentionMap& map, const std::string& path);
Mat read_matrix_csv(const std::string& path);

}  // namespace mtlink

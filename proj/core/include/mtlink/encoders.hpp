#pragma once

#include <cstdint>
#include <vector>

#include "mtlink/mat.hpp"
#include "mtlink/tensor.hpp"

namespace mtlink {

/// Scaled dot-product multi-head attention over already-projected Q, K, V
/// tensors of model width d (split into `heads` slices of d/heads). Rows
/// softmax over valid key positions only; dropout applies to the attention
/// probabilities. When `probes` is given, the softmax probabilities of each
/// head (before dropout) are copied out for inspection.
struct AttnProbes {
  std::vector<Mat> head_probs;
};

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            const std::vector<std::uint8_t>& valid_keys, double dropout_rate,
                            Rng* rng, bool training, AttnProbes* probes = nullptr);

/// One pre-norm transformer block: residual multi-head self-attention followed
/// by a residual feed-forward (d -> 4d -> d, relu). Padding rows are zeroed so
/// they neither influence valid rows nor leave the block non-zero.
struct TransformerBlock {
  std::size_t heads = 4;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  double dropout_rate = 0.1;
};

TransformerBlock init_transformer_block(std::size_t d, std::size_t heads, double dropout_rate,
                                        Rng& rng);

Tensor apply_block(const TransformerBlock& block, const Tensor& z,
                   const std::vector<std::uint8_t>& valid, Rng* rng, bool training,
                   AttnProbes* probes = nullptr);

/// Single block exposed under its spec name: residual self-attention +
/// feed-forward with padding isolation.
Tensor self_attend(const TransformerBlock& block, const Tensor& z,
                   const std::vector<std::uint8_t>& valid, Rng* rng, bool training,
                   AttnProbes* probes = nullptr);

enum class EncoderRole { Temporal, Masked };

/// Stack of independent transformer blocks (f_T or f_M). Zero blocks is the
/// identity.
struct EncoderStack {
  EncoderRole role = EncoderRole::Temporal;
  std::vector<TransformerBlock> blocks;
};

EncoderStack init_encoder_stack(EncoderRole role, std::size_t depth, std::size_t d,
                                std::size_t heads, double dropout_rate, Rng& rng);

Tensor encode(const EncoderStack& stack, const Tensor& z, const std::vector<std::uint8_t>& valid,
              Rng* rng, bool training, std::vector<AttnProbes>* probes = nullptr);

}  // namespace mtlink

#include "mtlink/encoders.hpp"

#include <algorithm>
#include <cmath>

namespace mtlink {

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            const std::vector<std::uint8_t>& valid_keys, double dropout_rate,
                            Rng* rng, bool training, AttnProbes* probes) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw ShapeError("attention: Q, K, V must be rank-2");
  const std::size_t d = q.dim(1);
  if (k.dim(1) != d || v.dim(1) != d)
    throw ShapeError("attention: Q, K, V widths disagree");
  if (k.dim(0) != v.dim(0)) throw ShapeError("attention: K and V lengths disagree");
  if (heads == 0 || d % heads != 0)
    throw ShapeError("attention: model width " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  if (valid_keys.size() != k.dim(0))
    throw ShapeError("attention: key mask length does not match K");

  const std::size_t dk = d / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<Tensor> head_outs;
  head_outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = slice_last(q, h * dk, dk);
    auto kh = slice_last(k, h * dk, dk);
    auto vh = slice_last(v, h * dk, dk);
    auto scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dk);
    auto prob = softmax_masked(scores, valid_keys);
    if (probes != nullptr) {
      Mat m(prob.dim(0), prob.dim(1));
      const auto pv = prob.values();
      std::copy(pv.begin(), pv.end(), m.data.begin());
      probes->head_probs.push_back(std::move(m));
    }
    if (training && dropout_rate > 0.0 && rng != nullptr)
      prob = dropout(prob, dropout_rate, *rng, training);
    head_outs.push_back(matmul(prob, vh));
  }
  return concat_last(head_outs);
}

TransformerBlock init_transformer_block(std::size_t d, std::size_t heads, double dropout_rate,
                                        Rng& rng) {
  if (heads == 0 || d % heads != 0)
    throw ValidationError("transformer block: d must be divisible by the head count");
  TransformerBlock b;
  b.heads = heads;
  b.dropout_rate = dropout_rate;
  b.wq = Tensor::randn({d, d}, rng, 0.02, true);
  b.bq = Tensor::zeros({d}, true);
  b.wk = Tensor::randn({d, d}, rng, 0.02, true);
  b.bk = Tensor::zeros({d}, true);
  b.wv = Tensor::randn({d, d}, rng, 0.02, true);
  b.bv = Tensor::zeros({d}, true);
  b.wo = Tensor::randn({d, d}, rng, 0.02, true);
  b.bo = Tensor::zeros({d}, true);
  b.ln1_g = Tensor::full({d}, 1.0, true);
  b.ln1_b = Tensor::zeros({d}, true);
  b.ln2_g = Tensor::full({d}, 1.0, true);
  b.ln2_b = Tensor::zeros({d}, true);
  b.ffn_w1 = Tensor::randn({d, 4 * d}, rng, 0.02, true);
  b.ffn_b1 = Tensor::zeros({4 * d}, true);
  b.ffn_w2 = Tensor::randn({4 * d, d}, rng, 0.02, true);
  b.ffn_b2 = Tensor::zeros({d}, true);
  return b;
}

Tensor apply_block(const TransformerBlock& block, const Tensor& z,
                   const std::vector<std::uint8_t>& valid, Rng* rng, bool training,
                   AttnProbes* probes) {
  if (z.rank() != 2) throw ShapeError("apply_block: expected rank-2 input");
  if (valid.size() != z.dim(0)) throw ShapeError("apply_block: mask length does not match rows");
  bool any = false;
  for (std::uint8_t m : valid) any = any || m != 0;
  if (!any) throw DegenerateRowError("apply_block: all positions are padding");

  // Padding rows enter as zeros and are re-zeroed after each sublayer, so the
  // residual stream stays exactly zero there.
  auto zin = row_mask(z, valid);

  auto normed = layer_norm(zin, block.ln1_g, block.ln1_b);
  auto q = add(matmul(normed, block.wq), block.bq);
  auto k = add(matmul(normed, block.wk), block.bk);
  auto v = add(matmul(normed, block.wv), block.bv);
  auto attn = scaled_dot_attention(q, k, v, block.heads, valid, block.dropout_rate, rng, training,
                                   probes);
  auto attn_out = add(matmul(attn, block.wo), block.bo);
  if (training && block.dropout_rate > 0.0 && rng != nullptr)
    attn_out = dropout(attn_out, block.dropout_rate, *rng, training);
  auto h = add(zin, row_mask(attn_out, valid));

  auto normed2 = layer_norm(h, block.ln2_g, block.ln2_b);
  auto ffn = add(matmul(relu(add(matmul(normed2, block.ffn_w1), block.ffn_b1)), block.ffn_w2),
                 block.ffn_b2);
  if (training && block.dropout_rate > 0.0 && rng != nullptr)
    ffn = dropout(ffn, block.dropout_rate, *rng, training);
  return add(h, row_mask(ffn, valid));
}

Tensor self_attend(const TransformerBlock& block, const Tensor& z,
                   const std::vector<std::uint8_t>& valid, Rng* rng, bool training,
                   AttnProbes* probes) {
  return apply_block(block, z, valid, rng, training, probes);
}

EncoderStack init_encoder_stack(EncoderRole role, std::size_t depth, std::size_t d,
                                std::size_t heads, double dropout_rate, Rng& rng) {
  EncoderStack s;
  s.role = role;
  s.blocks.reserve(depth);
  for (std::size_t i = 0; i < depth; ++i)
    s.blocks.push_back(init_transformer_block(d, heads, dropout_rate, rng));
  return s;
}

Tensor encode(const EncoderStack& stack, const Tensor& z, const std::vector<std::uint8_t>& valid,
              Rng* rng, bool training, std::vector<AttnProbes>* probes) {
  Tensor h = z;
  for (const TransformerBlock& block : stack.blocks) {
    AttnProbes* p = nullptr;
    if (probes != nullptr) {
      probes->emplace_back();
      p = &probes->back();
    }
    h = apply_block(block, h, valid, rng, training, p);
  }
  return h;
}

}  // namespace mtlink

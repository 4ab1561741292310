#include "mtlink/model.hpp"

namespace mtlink {

ModelParams init_model(const ModelConfig& cfg, Rng& rng) {
  if (cfg.vocab_size == 0) throw ValidationError("init_model: vocab_size must be set");
  if (cfg.d == 0 || cfg.d % 4 != 0)
    throw ValidationError("init_model: d must be a positive multiple of 4");
  if (cfg.heads == 0 || cfg.d % cfg.heads != 0)
    throw ValidationError("init_model: d must be divisible by the head count");
  if (cfg.cab_layers == 0) throw ValidationError("init_model: cab_layers must be at least 1");

  ModelParams p;
  p.embed = init_embedding_tables(cfg.vocab_size, cfg.d, rng);
  p.f_t = init_encoder_stack(EncoderRole::Temporal, cfg.ft_depth, cfg.d, cfg.heads, cfg.dropout,
                             rng);
  p.f_m = init_encoder_stack(EncoderRole::Masked, cfg.fm_depth, cfg.d, cfg.heads, cfg.dropout,
                             rng);
  p.cab = init_correlation_attention(cfg.d, cfg.cab_layers, cfg.heads, cfg.dropout, rng);
  p.mask_embedding = Tensor::randn({cfg.d}, rng, 0.02, true);
  p.head = init_predictor(cfg.d, rng);
  return p;
}

namespace {

void visit_block(const std::string& prefix, TransformerBlock& b,
                 const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".wq", b.wq);
  fn(prefix + ".bq", b.bq);
  fn(prefix + ".wk", b.wk);
  fn(prefix + ".bk", b.bk);
  fn(prefix + ".wv", b.wv);
  fn(prefix + ".bv", b.bv);
  fn(prefix + ".wo", b.wo);
  fn(prefix + ".bo", b.bo);
  fn(prefix + ".ln1_g", b.ln1_g);
  fn(prefix + ".ln1_b", b.ln1_b);
  fn(prefix + ".ln2_g", b.ln2_g);
  fn(prefix + ".ln2_b", b.ln2_b);
  fn(prefix + ".ffn_w1", b.ffn_w1);
  fn(prefix + ".ffn_b1", b.ffn_b1);
  fn(prefix + ".ffn_w2", b.ffn_w2);
  fn(prefix + ".ffn_b2", b.ffn_b2);
}

void visit_direction(const std::string& prefix, CrossAttnDirection& d,
                     const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".q0_w", d.q0_w);
  fn(prefix + ".q0_b", d.q0_b);
  fn(prefix + ".k_w", d.k_w);
  fn(prefix + ".k_b", d.k_b);
  fn(prefix + ".v_w", d.v_w);
  fn(prefix + ".v_b", d.v_b);
  for (std::size_t l = 0; l < d.layers.size(); ++l) {
    const std::string lp = prefix + ".l" + std::to_string(l);
    fn(lp + ".q_w", d.layers[l].q_w);
    fn(lp + ".q_b", d.layers[l].q_b);
    fn(lp + ".o_w", d.layers[l].o_w);
    fn(lp + ".o_b", d.layers[l].o_b);
    fn(lp + ".ln_g", d.layers[l].ln_g);
    fn(lp + ".ln_b", d.layers[l].ln_b);
  }
}

}  // namespace

void for_each_param(ModelParams& params,
                    const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("embed.poi", params.embed.poi);
  fn("embed.day", params.embed.day);
  fn("embed.proj_w", params.embed.proj_w);
  fn("embed.proj_b", params.embed.proj_b);
  fn("embed.te_freq", params.embed.te_freq);
  fn("embed.te_phase", params.embed.te_phase);
  for (std::size_t i = 0; i < params.f_t.blocks.size(); ++i)
    visit_block("f_t.b" + std::to_string(i), params.f_t.blocks[i], fn);
  for (std::size_t i = 0; i < params.f_m.blocks.size(); ++i)
    visit_block("f_m.b" + std::to_string(i), params.f_m.blocks[i], fn);
  visit_direction("cab.ab", params.cab.a_to_b, fn);
  visit_direction("cab.ba", params.cab.b_to_a, fn);
  fn("mask.z_alpha", params.mask_embedding);
  fn("head.w1", params.head.w1);
  fn("head.b1", params.head.b1);
  fn("head.w2", params.head.w2);
  fn("head.b2", params.head.b2);
}

std::vector<std::pair<std::string, Tensor>> named_params(ModelParams& params) {
  std::vector<std::pair<std::string, Tensor>> out;
  for_each_param(params, [&](const std::string& name, Tensor& t) { out.push_back({name, t}); });
  return out;
}

EncodedPair encode_pair(const PairSample& sample) {
  auto enc = [](const CheckinSequence& s) {
    EncodedSeq e;
    e.poi.reserve(s.points.size());
    e.t.reserve(s.points.size());
    for (const SeqPoint& p : s.points) {
      e.poi.push_back(p.poi_id);
      e.t.push_back(p.timestamp_utc);
      e.lat.push_back(p.lat);
      e.lon.push_back(p.lon);
    }
    return e;
  };
  return {enc(sample.seq_a), enc(sample.seq_b), sample.label};
}

ForwardResult forward_pair(const ModelParams& params, const ModelConfig& cfg,
                           const EncodedPair& pair, Rng* rng, bool training) {
  const std::size_t k_a = pair.a.length(), k_b = pair.b.length();
  if (k_a == 0 || k_b == 0) throw ContractError("forward_pair: empty sequence");
  const std::vector<std::uint8_t> valid_a(k_a, 1), valid_b(k_b, 1);

  // Spatio-temporal embedding plus time encoding.
  auto x_a = embed_sequence(pair.a.poi, pair.a.t, params.embed);
  auto x_b = embed_sequence(pair.b.poi, pair.b.t, params.embed);
  Tensor z_a, z_b;
  if (cfg.disable_tte) {
    z_a = add(x_a, sinusoidal_position_encoding(k_a, cfg.d));
    z_b = add(x_b, sinusoidal_position_encoding(k_b, cfg.d));
  } else {
    std::vector<double> ta(k_a), tb(k_b);
    for (std::size_t i = 0; i < k_a; ++i) ta[i] = normalize_time(pair.a.t[i], cfg.t_ref);
    for (std::size_t i = 0; i < k_b; ++i) tb[i] = normalize_time(pair.b.t[i], cfg.t_ref);
    z_a = add_temporal(x_a, ta, params.embed);
    z_b = add_temporal(x_b, tb, params.embed);
  }

  // Temporal transformer encoder, shared across platforms.
  auto h_a = encode(params.f_t, z_a, valid_a, rng, training);
  auto h_b = encode(params.f_t, z_b, valid_b, rng, training);

  ForwardResult res;
  Tensor features;
  if (cfg.disable_cab) {
    // Random masking arm: no correlation attention at all.
    if (rng == nullptr)
      throw ContractError("forward_pair: disable_cab needs an RNG for random plans");
    res.plan_a = select_mask_random(valid_a, cfg.mask_ratio, *rng, 'A');
    res.plan_b = select_mask_random(valid_b, cfg.mask_ratio, *rng, 'B');
    auto hm_a = encode(params.f_m, apply_mask(z_a, res.plan_a, params.mask_embedding), valid_a,
                       rng, training);
    auto hm_b = encode(params.f_m, apply_mask(z_b, res.plan_b, params.mask_embedding), valid_b,
                       rng, training);
    features = pool_and_concat(hm_a, hm_b, valid_a, valid_b);
  } else {
    auto cab = cross_attend_stack(params.cab, h_a, h_b, valid_a, valid_b, rng, training);
    res.map_ab = cab.map_ab;
    res.map_ba = cab.map_ba;
    if (cfg.disable_mte) {
      // Classify straight from the correlation attention output.
      features = pool_and_concat(cab.q_a_out, cab.q_b_out, valid_a, valid_b);
    } else {
      // Attention received from the opposite platform ranks token importance:
      // map A->B scores B's tokens, map B->A scores A's tokens.
      const auto scores_b = token_importance(res.map_ab, valid_b);
      const auto scores_a = token_importance(res.map_ba, valid_a);
      res.plan_a = select_mask(scores_a, cfg.mask_ratio, k_a, 'A');
      res.plan_b = select_mask(scores_b, cfg.mask_ratio, k_b, 'B');
      auto hm_a = encode(params.f_m, apply_mask(z_a, res.plan_a, params.mask_embedding), valid_a,
                         rng, training);
      auto hm_b = encode(params.f_m, apply_mask(z_b, res.plan_b, params.mask_embedding), valid_b,
                         rng, training);
      features = pool_and_concat(hm_a, hm_b, valid_a, valid_b);
    }
  }

  res.probability = predict(features, params.head);
  return res;
}

}  // namespace mtlink

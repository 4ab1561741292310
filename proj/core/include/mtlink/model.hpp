#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtlink/correlation_attention.hpp"
#include "mtlink/embedding.hpp"
#include "mtlink/encoders.hpp"
#include "mtlink/linkage_head.hpp"
#include "mtlink/masking.hpp"

namespace mtlink {

struct ModelConfig {
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t ft_depth = 2;
  std::size_t fm_depth = 2;
  std::size_t cab_layers = 2;
  double mask_ratio = 0.1;
  double dropout = 0.1;
  std::size_t vocab_size = 0;
  std::int64_t t_ref = 0;  // corpus reference timestamp for time normalization

  bool disable_mte = false;  // skip masking + masked encoder, pool the CAB output
  bool disable_cab = false;  // random masking instead of attention-guided
  bool disable_tte = false;  // fixed sinusoidal position encoding instead of TE
};

struct ModelParams {
  EmbeddingTables embed;
  EncoderStack f_t;
  EncoderStack f_m;
  CorrelationAttentionBlock cab;
  Tensor mask_embedding;  // z_alpha [d]
  PredictorMLP head;
};

ModelParams init_model(const ModelConfig& cfg, Rng& rng);

/// Visit every learnable tensor with a stable, order-deterministic name
/// ("embed.poi", "f_t.b0.wq", "cab.ab.l1.o_w", ...). Checkpointing, the
/// optimizer and gradient checking all iterate in this order.
void for_each_param(ModelParams& params,
                    const std::function<void(const std::string&, Tensor&)>& fn);
std::vector<std::pair<std::string, Tensor>> named_params(ModelParams& params);

/// A tokenized pair ready for the model.
struct EncodedSeq {
  std::vector<std::int64_t> poi;
  std::vector<std::int64_t> t;
  std::vector<std::optional<double>> lat;
  std::vector<std::optional<double>> lon;

  std::size_t length() const { return poi.size(); }
};

struct EncodedPair {
  EncodedSeq a;
  EncodedSeq b;
  int label = 0;
};

EncodedPair encode_pair(const PairSample& sample);

struct ForwardResult {
  Tensor probability;  // scalar in (0,1)
  AttentionMap map_ab;
  AttentionMap map_ba;
  MaskPlan plan_a;
  MaskPlan plan_b;
};

/// Full forward pass of one pair: embed, add time encoding, temporal encoder,
/// correlation attention, importance-guided masking, masked encoder, pooled
/// prediction. Ablation switches reroute exactly as configured. `rng` supplies
/// dropout draws (training) and random mask plans (disable_cab); it may be
/// null when neither is needed.
ForwardResult forward_pair(const ModelParams& params, const ModelConfig& cfg,
                           const EncodedPair& pair, Rng* rng, bool training);

}  // namespace mtlink

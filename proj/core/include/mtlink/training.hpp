#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mtlink/checkpoint.hpp"
#include "mtlink/metrics.hpp"
#include "mtlink/model.hpp"

namespace mtlink {

enum class WeightMode { InverseFrequency, None };

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
  bool improved = false;
  double seconds = 0.0;
};

struct TrainConfig {
  ModelConfig model;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double grad_clip = 5.0;  // global norm; <= 0 disables
  WeightMode weight_mode = WeightMode::InverseFrequency;
  std::uint64_t seed = 42;
  std::size_t num_threads = 0;  // 0 picks hardware_concurrency (capped at 8)

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  std::function<void(const EpochLog&)> on_epoch;  // optional progress hook
};

/// Adam over a fixed list of named parameters. Gradients arrive as flat
/// buffers aligned with the parameter list.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor>> params, double lr, double beta1, double beta2,
       double eps);

  void step(const std::vector<std::vector<double>>& grads);
  std::size_t steps_taken() const { return t_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
  const std::vector<std::vector<double>>& moment1() const { return m_; }
  const std::vector<std::vector<double>>& moment2() const { return v_; }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

/// Scale gradients in place to a maximum global L2 norm; returns the norm
/// before clipping.
double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm);

struct TrainResult {
  ModelParams best_params;
  MetricsReport best_val_metrics;
  std::size_t best_epoch = 0;   // 0-based index into the curves
  std::size_t epochs_run = 0;
  std::vector<double> train_loss_curve;
  std::vector<double> val_auc_curve;
  LossWeights weights;
  std::size_t adam_steps = 0;
  std::vector<std::pair<std::string, std::vector<double>>> adam_m, adam_v;
};

/// Deep copy: fresh value buffers, gradient state dropped.
ModelParams clone_params(const ModelParams& params);

/// Minimize the weighted binary cross-entropy with Adam; after each epoch
/// compute validation AUC and stop once it fails to improve for `patience`
/// consecutive epochs. Deterministic for a fixed seed and thread count.
TrainResult train(const std::vector<EncodedPair>& train_pairs,
                  const std::vector<EncodedPair>& val_pairs, const TrainConfig& cfg);

/// Eval-mode linkage probabilities, in input order. The seed only matters for
/// the random-masking ablation arm, which draws its plans from it.
std::vector<double> evaluate_scores(const ModelParams& params, const ModelConfig& cfg,
                                    const std::vector<EncodedPair>& pairs,
                                    std::size_t num_threads = 0, std::uint64_t eval_seed = 0);

MetricsReport evaluate_metrics(const ModelParams& params, const ModelConfig& cfg,
                               const std::vector<EncodedPair>& pairs,
                               std::size_t num_threads = 0, std::uint64_t eval_seed = 0);

// ---- Config and checkpoint plumbing ----------------------------------------

KvConfig train_config_to_kv(const TrainConfig& cfg);
TrainConfig train_config_from_kv(const KvConfig& kv);

/// Package the training outcome: config snapshot, parameters, optimizer
/// moments, epoch counters and the stored validation metrics.
Checkpoint make_checkpoint(const TrainResult& result, const TrainConfig& cfg);

struct LoadedModel {
  TrainConfig cfg;
  ModelParams params;
  MetricsReport stored_val_metrics;
  std::size_t best_epoch = 0;
};

LoadedModel load_model(const Checkpoint& ck);

}  // namespace mtlink

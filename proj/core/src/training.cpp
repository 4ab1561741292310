#include "mtlink/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

namespace mtlink {

namespace {

constexpr std::uint64_t kShuffleTag = 0x5348554646ull;   // batch order
constexpr std::uint64_t kDropoutTag = 0x44524f50ull;     // per-pair forward draws
constexpr std::uint64_t kEvalTag = 0x4556414cull;        // eval-mode plans

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return std::min<std::size_t>(hw == 0 ? 1 : hw, 8);
}

/// Run fn(begin, end, worker) over contiguous chunks of [0, n).
void parallel_chunks(std::size_t n, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t t = std::max<std::size_t>(1, std::min(threads, n));
  if (t == 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t w = 0; w < t; ++w) {
    const std::size_t begin = n * w / t;
    const std::size_t end = n * (w + 1) / t;
    pool.emplace_back([&, begin, end, w] { fn(begin, end, w); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, double lr, double beta1,
           double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].second.size(), 0.0);
    v_[i].assign(params_[i].second.size(), 0.0);
  }
}

void Adam::step(const std::vector<std::vector<double>>& grads) {
  if (grads.size() != params_.size())
    throw ContractError("Adam::step: gradient list does not match parameter list");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto vals = params_[i].second.values_mut();
    const auto& g = grads[i];
    if (g.size() != vals.size())
      throw ContractError("Adam::step: gradient size mismatch for " + params_[i].first);
    for (std::size_t j = 0; j < vals.size(); ++j) {
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      vals[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (double& x : g) x *= s;
  }
  return norm;
}

ModelParams clone_params(const ModelParams& params) {
  ModelParams copy = params;
  for_each_param(copy, [](const std::string&, Tensor& t) {
    Tensor fresh = t.detach();
    fresh.set_requires_grad(true);
    t = fresh;
  });
  return copy;
}

std::vector<double> evaluate_scores(const ModelParams& params, const ModelConfig& cfg,
                                    const std::vector<EncodedPair>& pairs,
                                    std::size_t num_threads, std::uint64_t eval_seed) {
  std::vector<double> scores(pairs.size(), 0.0);
  Rng eval_root = Rng(eval_seed).split(kEvalTag);
  parallel_chunks(pairs.size(), resolve_threads(num_threads),
                  [&](std::size_t begin, std::size_t end, std::size_t) {
                    for (std::size_t i = begin; i < end; ++i) {
                      Rng pair_rng = eval_root.split(i);
                      auto res = forward_pair(params, cfg, pairs[i], &pair_rng, false);
                      scores[i] = res.probability.item();
                    }
                  });
  return scores;
}

MetricsReport evaluate_metrics(const ModelParams& params, const ModelConfig& cfg,
                               const std::vector<EncodedPair>& pairs, std::size_t num_threads,
                               std::uint64_t eval_seed) {
  if (pairs.empty()) throw ContractError("evaluate_metrics: empty pair list");
  std::vector<int> labels(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) labels[i] = pairs[i].label;
  return compute_metrics(evaluate_scores(params, cfg, pairs, num_threads, eval_seed), labels);
}

TrainResult train(const std::vector<EncodedPair>& train_pairs,
                  const std::vector<EncodedPair>& val_pairs, const TrainConfig& cfg) {
  if (train_pairs.empty() || val_pairs.empty())
    throw ContractError("train: train and validation splits must be non-empty");

  std::size_t n_pos = 0;
  for (const auto& p : train_pairs) n_pos += p.label == 1;
  const std::size_t n_neg = train_pairs.size() - n_pos;
  LossWeights weights;
  if (cfg.weight_mode == WeightMode::InverseFrequency) {
    if (n_pos == 0 || n_neg == 0)
      throw ContractError("train: inverse-frequency weights need both classes in train");
    weights = inverse_frequency_weights(n_pos, n_neg);
  }

  Rng root(cfg.seed);
  Rng init_rng = root.split(0x494e4954ull);
  ModelParams params = init_model(cfg.model, init_rng);
  Adam adam(named_params(params), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  const std::size_t n_params = adam.params().size();
  const std::size_t threads = resolve_threads(cfg.num_threads);

  TrainResult result;
  result.weights = weights;
  double best_auc = -1.0;
  std::size_t bad_epochs = 0;

  std::vector<std::size_t> order(train_pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();

    Rng shuffle_rng = root.split(kShuffleTag).split(epoch);
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const std::size_t j = i + static_cast<std::size_t>(shuffle_rng.uniform_int(
                                    0, static_cast<std::int64_t>(order.size() - i) - 1));
      std::swap(order[i], order[j]);
    }

    Rng dropout_root = root.split(kDropoutTag).split(epoch);
    double epoch_loss_sum = 0.0;

    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += cfg.batch_size) {
      const std::size_t batch_n = std::min(cfg.batch_size, order.size() - batch_start);

      std::vector<GradStore> stores(std::min(std::max<std::size_t>(threads, 1), batch_n));
      std::vector<double> pair_losses(batch_n, 0.0);

      parallel_chunks(batch_n, threads, [&](std::size_t begin, std::size_t end, std::size_t w) {
        for (std::size_t bi = begin; bi < end; ++bi) {
          const std::size_t pi = order[batch_start + bi];
          const EncodedPair& pair = train_pairs[pi];
          Rng pair_rng = dropout_root.split(batch_start + bi);
          auto fwd = forward_pair(params, cfg.model, pair, &pair_rng, true);
          const double w_i = pair.label == 1 ? weights.w_pos : weights.w_neg;
          auto loss = bce_term(fwd.probability, pair.label, w_i / static_cast<double>(batch_n));
          pair_losses[bi] = loss.item() * static_cast<double>(batch_n);
          loss.backward(stores[w]);
        }
      });

      // Merge worker stores into flat per-parameter gradients, in a fixed
      // parameter-major order so the result is schedule-independent.
      std::vector<std::vector<double>> grads(n_params);
      for (std::size_t i = 0; i < n_params; ++i) {
        const Tensor& p = adam.params()[i].second;
        grads[i].assign(p.size(), 0.0);
        for (const GradStore& store : stores) {
          const std::vector<double>* buf = store.find(p.node().get());
          if (buf == nullptr) continue;
          for (std::size_t j = 0; j < grads[i].size(); ++j) grads[i][j] += (*buf)[j];
        }
      }

      double batch_loss = 0.0;
      for (double l : pair_losses) batch_loss += l;
      batch_loss /= static_cast<double>(batch_n);
      if (!std::isfinite(batch_loss))
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(batch_start / cfg.batch_size));
      epoch_loss_sum += batch_loss * static_cast<double>(batch_n);

      clip_global_norm(grads, cfg.grad_clip);
      adam.step(grads);
    }

    const double train_loss = epoch_loss_sum / static_cast<double>(train_pairs.size());
    result.train_loss_curve.push_back(train_loss);

    const MetricsReport val_metrics =
        evaluate_metrics(params, cfg.model, val_pairs, threads, cfg.seed);
    const double val_auc = val_metrics.auc.value_or(0.0);
    result.val_auc_curve.push_back(val_auc);
    result.epochs_run = epoch + 1;

    const bool improved = val_auc > best_auc;
    if (improved) {
      best_auc = val_auc;
      bad_epochs = 0;
      result.best_epoch = epoch;
      result.best_params = clone_params(params);
      result.best_val_metrics = val_metrics;
    } else {
      ++bad_epochs;
    }

    if (cfg.on_epoch) {
      EpochLog log;
      log.epoch = epoch;
      log.train_loss = train_loss;
      log.val_auc = val_auc;
      log.improved = improved;
      log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start)
                        .count();
      cfg.on_epoch(log);
    }

    if (bad_epochs >= cfg.patience) break;
  }

  result.adam_steps = adam.steps_taken();
  for (std::size_t i = 0; i < n_params; ++i) {
    result.adam_m.push_back({adam.params()[i].first, adam.moment1()[i]});
    result.adam_v.push_back({adam.params()[i].first, adam.moment2()[i]});
  }
  return result;
}

// ---- Config and checkpoint plumbing ----------------------------------------

KvConfig train_config_to_kv(const TrainConfig& cfg) {
  KvConfig kv;
  auto set_num = [&](const std::string& k, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    kv.set(k, buf);
  };
  kv.set("d", std::to_string(cfg.model.d));
  kv.set("heads", std::to_string(cfg.model.heads));
  kv.set("ft_depth", std::to_string(cfg.model.ft_depth));
  kv.set("fm_depth", std::to_string(cfg.model.fm_depth));
  kv.set("cab_layers", std::to_string(cfg.model.cab_layers));
  set_num("mask_ratio", cfg.model.mask_ratio);
  set_num("dropout", cfg.model.dropout);
  kv.set("vocab_size", std::to_string(cfg.model.vocab_size));
  kv.set("t_ref", std::to_string(cfg.model.t_ref));
  kv.set("disable_mte", cfg.model.disable_mte ? "true" : "false");
  kv.set("disable_cab", cfg.model.disable_cab ? "true" : "false");
  kv.set("disable_tte", cfg.model.disable_tte ? "true" : "false");
  set_num("learning_rate", cfg.learning_rate);
  kv.set("batch_size", std::to_string(cfg.batch_size));
  kv.set("max_epochs", std::to_string(cfg.max_epochs));
  kv.set("patience", std::to_string(cfg.patience));
  set_num("grad_clip", cfg.grad_clip);
  kv.set("loss_weight_mode",
         cfg.weight_mode == WeightMode::InverseFrequency ? "inverse_frequency" : "none");
  kv.set("seed", std::to_string(cfg.seed));
  kv.set("num_threads", std::to_string(cfg.num_threads));
  return kv;
}

TrainConfig train_config_from_kv(const KvConfig& kv) {
  TrainConfig cfg;
  cfg.model.d = static_cast<std::size_t>(kv.get_int("d", 64));
  cfg.model.heads = static_cast<std::size_t>(kv.get_int("heads", 4));
  cfg.model.ft_depth = static_cast<std::size_t>(kv.get_int("ft_depth", 2));
  cfg.model.fm_depth = static_cast<std::size_t>(kv.get_int("fm_depth", 2));
  cfg.model.cab_layers = static_cast<std::size_t>(kv.get_int("cab_layers", 2));
  cfg.model.mask_ratio = kv.get_double("mask_ratio", 0.1);
  cfg.model.dropout = kv.get_double("dropout", 0.1);
  cfg.model.vocab_size = static_cast<std::size_t>(kv.get_int("vocab_size", 0));
  cfg.model.t_ref = kv.get_int("t_ref", 0);
  cfg.model.disable_mte = kv.get_bool("disable_mte", false);
  cfg.model.disable_cab = kv.get_bool("disable_cab", false);
  cfg.model.disable_tte = kv.get_bool("disable_tte", false);
  cfg.learning_rate = kv.get_double("learning_rate", 0.001);
  cfg.batch_size = static_cast<std::size_t>(kv.get_int("batch_size", 32));
  cfg.max_epochs = static_cast<std::size_t>(kv.get_int("max_epochs", 100));
  cfg.patience = static_cast<std::size_t>(kv.get_int("patience", 5));
  cfg.grad_clip = kv.get_double("grad_clip", 5.0);
  const std::string mode = kv.get_str("loss_weight_mode", "inverse_frequency");
  if (mode == "inverse_frequency")
    cfg.weight_mode = WeightMode::InverseFrequency;
  else if (mode == "none")
    cfg.weight_mode = WeightMode::None;
  else
    throw ValidationError("loss_weight_mode must be inverse_frequency or none");
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", 42));
  cfg.num_threads = static_cast<std::size_t>(kv.get_int("num_threads", 0));
  return cfg;
}

Checkpoint make_checkpoint(const TrainResult& result, const TrainConfig& cfg) {
  Checkpoint ck;
  ck.config = train_config_to_kv(cfg);

  ModelParams best = clone_params(result.best_params);
  for_each_param(best, [&](const std::string& name, Tensor& t) { ck.put("param." + name, t); });
  for (const auto& [name, m] : result.adam_m)
    ck.put("adam.m." + name, Tensor::from({m.size()}, m));
  for (const auto& [name, v] : result.adam_v)
    ck.put("adam.v." + name, Tensor::from({v.size()}, v));
  ck.put_scalar("adam.steps", static_cast<double>(result.adam_steps));
  ck.put_scalar("train.best_epoch", static_cast<double>(result.best_epoch));
  ck.put_scalar("train.epochs_run", static_cast<double>(result.epochs_run));
  ck.put_scalar("metrics.val.macro_precision", result.best_val_metrics.macro_precision);
  ck.put_scalar("metrics.val.macro_recall", result.best_val_metrics.macro_recall);
  ck.put_scalar("metrics.val.macro_f1", result.best_val_metrics.macro_f1);
  ck.put_scalar("metrics.val.auc", result.best_val_metrics.auc.value_or(
                                       std::numeric_limits<double>::quiet_NaN()));
  ck.put_scalar("metrics.val.n_samples", static_cast<double>(result.best_val_metrics.n_samples));
  ck.put_scalar("metrics.val.tp", static_cast<double>(result.best_val_metrics.confusion.tp));
  ck.put_scalar("metrics.val.fp", static_cast<double>(result.best_val_metrics.confusion.fp));
  ck.put_scalar("metrics.val.tn", static_cast<double>(result.best_val_metrics.confusion.tn));
  ck.put_scalar("metrics.val.fn", static_cast<double>(result.best_val_metrics.confusion.fn));
  ck.put_scalar("loss.w_pos", result.weights.w_pos);
  ck.put_scalar("loss.w_neg", result.weights.w_neg);
  return ck;
}

LoadedModel load_model(const Checkpoint& ck) {
  LoadedModel out;
  out.cfg = train_config_from_kv(ck.config);

  Rng dummy(0);
  out.params = init_model(out.cfg.model, dummy);
  for_each_param(out.params, [&](const std::string& name, Tensor& t) {
    const Tensor* stored = ck.find("param." + name);
    if (stored == nullptr) throw IoError("checkpoint: missing parameter " + name);
    if (stored->shape() != t.shape())
      throw IoError("checkpoint: shape mismatch for " + name);
    Tensor fresh = stored->detach();
    fresh.set_requires_grad(true);
    t = fresh;
  });

  out.stored_val_metrics.macro_precision = ck.scalar("metrics.val.macro_precision");
  out.stored_val_metrics.macro_recall = ck.scalar("metrics.val.macro_recall");
  out.stored_val_metrics.macro_f1 = ck.scalar("metrics.val.macro_f1");
  const double auc = ck.scalar("metrics.val.auc");
  if (!std::isnan(auc)) out.stored_val_metrics.auc = auc;
  out.stored_val_metrics.n_samples =
      static_cast<std::size_t>(ck.scalar("metrics.val.n_samples"));
  out.stored_val_metrics.confusion.tp = static_cast<std::size_t>(ck.scalar("metrics.val.tp"));
  out.stored_val_metrics.confusion.fp = static_cast<std::size_t>(ck.scalar("metrics.val.fp"));
  out.stored_val_metrics.confusion.tn = static_cast<std::size_t>(ck.scalar("metrics.val.tn"));
  out.stored_val_metrics.confusion.fn = static_cast<std::size_t>(ck.scalar("metrics.val.fn"));
  out.best_epoch = static_cast<std::size_t>(ck.scalar("train.best_epoch"));
  return out;
}

}  // namespace mtlink

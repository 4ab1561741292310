#include <CLI11.hpp>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mtlink/dataset.hpp"
#include "mtlink/gradcheck.hpp"
#include "mtlink/ingest.hpp"
#include "mtlink/synth.hpp"
#include "mtlink/training.hpp"
#include "mtlink/viz.hpp"

namespace {

using namespace mtlink;
using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

ordered_json metrics_json(const MetricsReport& r) {
  ordered_json j;
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  if (r.auc.has_value())
    j["auc"] = *r.auc;
  else
    j["auc"] = nullptr;
  j["confusion"] = {{"tp", r.confusion.tp},
                    {"fp", r.confusion.fp},
                    {"tn", r.confusion.tn},
                    {"fn", r.confusion.fn}};
  j["n_samples"] = r.n_samples;
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

/// Pairs of (CLI flag, config key): every tunable has both spellings, and a
/// flag given on the command line overrides the config file.
struct TrainFlagSpec {
  const char* flag;
  const char* key;
  const char* help;
};

constexpr TrainFlagSpec kTrainFlags[] = {
    {"--d", "d", "model width (default 64)"},
    {"--heads", "heads", "attention heads (default 4)"},
    {"--ft-depth", "ft_depth", "temporal encoder blocks (default 2)"},
    {"--fm-depth", "fm_depth", "masked encoder blocks (default 2)"},
    {"--cab-layers", "cab_layers", "correlation attention layers (default 2)"},
    {"--mask-ratio", "mask_ratio", "fraction of tokens masked (default 0.1)"},
    {"--dropout", "dropout", "dropout rate (default 0.1)"},
    {"--learning-rate", "learning_rate", "Adam learning rate (default 0.001)"},
    {"--batch-size", "batch_size", "pairs per optimizer step (default 32)"},
    {"--max-epochs", "max_epochs", "epoch cap (default 100)"},
    {"--patience", "patience", "early-stopping patience on validation AUC (default 5)"},
    {"--grad-clip", "grad_clip", "global-norm gradient clip, <=0 disables (default 5)"},
    {"--loss-weight-mode", "loss_weight_mode", "inverse_frequency | none"},
    {"--seed", "seed", "RNG seed (default 42)"},
    {"--threads", "num_threads", "worker threads, 0 = auto"},
};

constexpr TrainFlagSpec kTrainSwitches[] = {
    {"--disable-mte", "disable_mte", "ablation: skip masking and the masked encoder"},
    {"--disable-cab", "disable_cab", "ablation: random masking instead of attention-guided"},
    {"--disable-tte", "disable_tte", "ablation: sinusoidal position encoding instead of TE"},
};

void dump_mask_plans(const std::string& path, const ModelParams& params, const ModelConfig& cfg,
                     const std::vector<EncodedPair>& pairs, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  Rng root = Rng(seed).split(0x4556414cull);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Rng rng = root.split(i);
    auto res = forward_pair(params, cfg, pairs[i], &rng, false);
    for (const auto& [plan, platform] :
         {std::pair{&res.plan_a, "A"}, std::pair{&res.plan_b, "B"}}) {
      ordered_json j;
      j["pair_id"] = i;
      j["platform"] = platform;
      j["indices"] = plan->indices;
      out << j.dump() << '\n';
    }
  }
}

int cmd_generate(const SynthConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  generate_to_files(cfg, out_dir);
  std::cout << "wrote " << out_dir << "/checkins_a.csv, checkins_b.csv, identity_map.csv\n";
  return kExitOk;
}

int cmd_preprocess(const std::string& a_path, const std::string& b_path,
                   const std::string& map_path, const std::string& out_path,
                   const PreprocessOptions& opts) {
  auto dataset = preprocess(read_checkins(a_path), read_checkins(b_path),
                            read_identity_map(map_path), opts);
  save_dataset(dataset, out_path);
  std::cout << "wrote " << out_path << " (train " << dataset.train.size() << ", val "
            << dataset.val.size() << ", test " << dataset.test.size() << ", vocab "
            << dataset.meta.vocab.size() << ")\n";
  return kExitOk;
}

int cmd_train(const std::string& dataset_path, const std::string& out_path, KvConfig kv,
              const std::string& metrics_out) {
  const Dataset dataset = load_dataset(dataset_path);
  TrainConfig cfg = train_config_from_kv(kv);
  cfg.model.vocab_size = dataset.meta.vocab.size();
  cfg.model.t_ref = dataset.meta.t_ref;
  cfg.on_epoch = [](const EpochLog& log) {
    std::fprintf(stderr, "epoch %3zu  loss %.6f  val_auc %.6f%s  (%.1fs)\n", log.epoch,
                 log.train_loss, log.val_auc, log.improved ? "  *" : "", log.seconds);
  };

  auto result = train(encode_pairs(dataset.train), encode_pairs(dataset.val), cfg);
  make_checkpoint(result, cfg).save(out_path);

  ordered_json summary;
  summary["checkpoint"] = out_path;
  summary["epochs_run"] = result.epochs_run;
  summary["best_epoch"] = result.best_epoch;
  summary["val_metrics"] = metrics_json(result.best_val_metrics);
  const std::string text = summary.dump(2);
  std::cout << text << '\n';
  if (!metrics_out.empty()) write_text(metrics_out, text + "\n");
  return kExitOk;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& dataset_path,
                 const std::string& split, const std::string& metrics_out,
                 const std::string& mask_plan_out, std::size_t threads) {
  const Dataset dataset = load_dataset(dataset_path);
  auto loaded = load_model(Checkpoint::load(ckpt_path));
  const auto pairs = encode_pairs(dataset.split(split));
  if (pairs.empty()) throw ValidationError("evaluate: split '" + split + "' is empty");

  const auto metrics =
      evaluate_metrics(loaded.params, loaded.cfg.model, pairs, threads, loaded.cfg.seed);

  ordered_json out;
  out["split"] = split;
  out["metrics"] = metrics_json(metrics);
  out["stored_val_metrics"] = metrics_json(loaded.stored_val_metrics);
  const std::string text = out.dump(2);
  std::cout << text << '\n';
  if (!metrics_out.empty()) write_text(metrics_out, text + "\n");
  if (!mask_plan_out.empty())
    dump_mask_plans(mask_plan_out, loaded.params, loaded.cfg.model, pairs, loaded.cfg.seed);
  return kExitOk;
}

int cmd_export_attention(const std::string& ckpt_path, const std::string& dataset_path,
                         const std::string& split, std::size_t pair_id,
                         const std::string& out_prefix, const std::string& mask_plan_out) {
  const Dataset dataset = load_dataset(dataset_path);
  auto loaded = load_model(Checkpoint::load(ckpt_path));
  const auto& pairs = dataset.split(split);
  if (pair_id >= pairs.size())
    throw ValidationError("export-attention: pair id " + std::to_string(pair_id) +
                          " out of range (split has " + std::to_string(pairs.size()) + ")");
  const PairSample& sample = pairs[pair_id];
  if (loaded.cfg.model.disable_cab)
    throw ValidationError("export-attention: checkpoint was trained without the correlation "
                          "attention block; no maps exist");

  Rng rng = Rng(loaded.cfg.seed).split(0x4556414cull).split(pair_id);
  auto res = forward_pair(loaded.params, loaded.cfg.model, encode_pair(sample), &rng, false);
  const Mat cooc = cooccurrence_matrix(sample.seq_a, sample.seq_b);
  auto files = export_heatmaps(res.map_ab, res.map_ba, cooc, out_prefix);
  if (!mask_plan_out.empty())
    dump_mask_plans(mask_plan_out, loaded.params, loaded.cfg.model, {encode_pair(sample)},
                    loaded.cfg.seed);

  std::cout << "wrote " << files.map_ab_csv << ", " << files.map_ba_csv << ", "
            << files.cooccurrence_csv << ", " << files.image_svg << '\n';
  return kExitOk;
}

int cmd_gradcheck(std::size_t d, std::size_t k, std::size_t heads, std::size_t batch,
                  std::size_t cab_layers, std::size_t ft_depth, std::size_t fm_depth,
                  std::uint64_t seed, double tolerance) {
  ModelConfig cfg;
  cfg.d = d;
  cfg.heads = heads;
  cfg.ft_depth = ft_depth;
  cfg.fm_depth = fm_depth;
  cfg.cab_layers = cab_layers;
  cfg.dropout = 0.0;  // forward runs in eval mode; dropout is identity
  cfg.vocab_size = 2 * k;

  Rng init = Rng(seed).split(1);
  ModelParams params = init_model(cfg, init);

  // One-day horizon keeps the cosine phases w*t well conditioned for central
  // differences at h=1e-5; longer horizons only add truncation error, not
  // coverage.
  Rng data = Rng(seed).split(2);
  std::vector<EncodedPair> pairs;
  for (std::size_t i = 0; i < batch; ++i) {
    EncodedPair pair;
    pair.label = i % 2 == 0 ? 1 : 0;
    for (std::size_t j = 0; j < k; ++j) {
      for (auto* seq : {&pair.a, &pair.b}) {
        seq->poi.push_back(data.uniform_int(0, static_cast<std::int64_t>(cfg.vocab_size) - 1));
        seq->t.push_back(data.uniform_int(0, 86400));
        seq->lat.emplace_back();
        seq->lon.emplace_back();
      }
    }
    pairs.push_back(std::move(pair));
  }

  auto loss_of = [&] {
    std::vector<Tensor> probs;
    std::vector<int> labels;
    for (const auto& pair : pairs) {
      probs.push_back(forward_pair(params, cfg, pair, nullptr, false).probability);
      labels.push_back(pair.label);
    }
    return weighted_bce(stack_scalars(probs), labels, 1.25, 0.75);
  };
  loss_of().backward();

  // Central differences, h = 1e-5; relative error uses a floored denominator
  // max(|analytic|, |fd|, 1e-2) so gradients below the finite-difference
  // noise floor (~1e-7 at this h) compare on an absolute scale.
  const auto res = finite_difference_check(named_params(params),
                                           [&] { return loss_of().item(); }, 1e-5, 1e-2);
  std::printf("checked %zu partial derivatives over %zu parameters\n", res.n_checked,
              named_params(params).size());
  std::printf("max_rel_err %.3e at %s[%zu] (analytic %.6e, finite-diff %.6e)\n", res.max_rel_err,
              res.worst_param.c_str(), res.worst_index, res.worst_analytic, res.worst_fd);
  const bool pass = res.max_rel_err < tolerance;
  std::printf("tolerance %.1e: %s\n", tolerance, pass ? "PASS" : "FAIL");
  return pass ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MT-Link: cross-platform user identity linkage from check-in sequences"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  // generate
  auto* gen = app.add_subcommand("generate", "write synthetic check-in files");
  SynthConfig syn;
  std::string gen_out = "data";
  std::size_t users = syn.n_users;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--users", users, "number of linked users");
  gen->add_option("--cooccur", syn.cooccur_fraction, "co-occurrence fraction [0,1]");
  gen->add_option("--noise", syn.noise_rate, "uniform noise share [0,1]");
  gen->add_option("--jitter", syn.jitter_seconds, "max |time jitter| on copied points (s)");
  gen->add_option("--seq-len-min-a", syn.seq_len_min_a, "min sequence length on A");
  gen->add_option("--seq-len-max-a", syn.seq_len_max_a, "max sequence length on A");
  gen->add_option("--seq-len-min-b", syn.seq_len_min_b, "min sequence length on B");
  gen->add_option("--seq-len-max-b", syn.seq_len_max_b, "max sequence length on B");
  gen->add_option("--extent-lat0", syn.extent_lat0, "box south-west latitude");
  gen->add_option("--extent-lon0", syn.extent_lon0, "box south-west longitude");
  gen->add_option("--extent-span", syn.extent_span_deg, "box size in degrees");
  gen->add_option("--home-sigma", syn.home_sigma_deg, "home-region spread (degrees)");
  gen->add_option("--horizon-days", syn.horizon_days, "time horizon (days)");
  gen->add_option("--bursts", syn.bursts_per_user, "activity bursts per user");
  gen->add_option("--burst-hours", syn.burst_len_hours, "burst length (hours)");
  gen->add_option("--t-start", syn.t_start, "horizon start (epoch seconds)");
  gen->add_option("--seed", syn.seed, "RNG seed");

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "tokenize, split and pair raw check-ins");
  std::string prep_a, prep_b, prep_map, prep_out = "dataset.jsonl";
  PreprocessOptions popts;
  std::string daily = "none";
  std::vector<double> fractions = {0.7, 0.1, 0.2};
  prep->add_option("--checkins-a", prep_a, "platform A check-in file (CSV or JSONL)")->required();
  prep->add_option("--checkins-b", prep_b, "platform B check-in file (CSV or JSONL)")->required();
  prep->add_option("--identity-map", prep_map, "two-column identity CSV")->required();
  prep->add_option("--out", prep_out, "output dataset path");
  prep->add_option("--cell", popts.grid.cell_size_deg, "grid cell size (degrees)");
  prep->add_option("--origin-lat", popts.grid.origin_lat, "grid origin latitude");
  prep->add_option("--origin-lon", popts.grid.origin_lon, "grid origin longitude");
  prep->add_option("--min-len", popts.min_len, "drop sequences shorter than this");
  prep->add_option("--max-len", popts.max_len, "drop sequences longer than this");
  prep->add_option("--daily-split", daily, "split sequences by UTC day: none|a|b|both");
  prep->add_option("--neg-ratio", popts.neg_ratio, "negatives per positive");
  prep->add_option("--fractions", fractions, "train val test fractions")->expected(3);
  prep->add_option("--seed", popts.seed, "RNG seed");

  // train
  auto* tr = app.add_subcommand("train", "train a linkage model");
  std::string tr_dataset, tr_out = "model.mtlk", tr_config, tr_metrics;
  tr->add_option("--dataset", tr_dataset, "dataset file from preprocess")->required();
  tr->add_option("--out", tr_out, "checkpoint output path");
  tr->add_option("--config", tr_config, "key=value config file (flags override)");
  tr->add_option("--metrics-out", tr_metrics, "write the training summary JSON here");
  std::map<std::string, std::string> flag_values;
  for (const auto& spec : kTrainFlags)
    tr->add_option(spec.flag, flag_values[spec.key], spec.help);
  for (const auto& spec : kTrainSwitches) tr->add_flag(spec.flag, spec.help);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "compute metrics for a checkpoint");
  std::string ev_ckpt, ev_dataset, ev_split = "test", ev_metrics, ev_plans;
  std::size_t ev_threads = 0;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--dataset", ev_dataset, "dataset file")->required();
  ev->add_option("--split", ev_split, "train | val | test (default test)");
  ev->add_option("--metrics-out", ev_metrics, "write the metrics JSON here");
  ev->add_option("--dump-mask-plans", ev_plans, "debug: write mask plans as JSON-lines");
  ev->add_option("--threads", ev_threads, "worker threads, 0 = auto");

  // export-attention
  auto* ex = app.add_subcommand("export-attention",
                                "write attention maps, co-occurrence matrix and heatmaps");
  std::string ex_ckpt, ex_dataset, ex_split = "test", ex_out = "viz/pair_", ex_plans;
  std::size_t ex_pair = 0;
  ex->add_option("--checkpoint", ex_ckpt, "checkpoint path")->required();
  ex->add_option("--dataset", ex_dataset, "dataset file")->required();
  ex->add_option("--split", ex_split, "split to index into (default test)");
  ex->add_option("--pair-id", ex_pair, "pair index within the split");
  ex->add_option("--out", ex_out, "output path prefix");
  ex->add_option("--dump-mask-plans", ex_plans, "debug: write this pair's mask plans");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference check of every model gradient");
  std::size_t gc_d = 8, gc_k = 6, gc_heads = 2, gc_batch = 2, gc_cab = 2, gc_ft = 2, gc_fm = 2;
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-4;
  gc->add_option("--d", gc_d, "model width");
  gc->add_option("--k", gc_k, "sequence length");
  gc->add_option("--heads", gc_heads, "attention heads");
  gc->add_option("--batch", gc_batch, "pairs in the probe batch");
  gc->add_option("--cab-layers", gc_cab, "correlation attention layers");
  gc->add_option("--ft-depth", gc_ft, "temporal encoder depth");
  gc->add_option("--fm-depth", gc_fm, "masked encoder depth");
  gc->add_option("--seed", gc_seed, "RNG seed");
  gc->add_option("--tolerance", gc_tol, "max relative error to pass");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen->parsed()) {
      syn.n_users = users;
      return cmd_generate(syn, gen_out);
    }
    if (prep->parsed()) {
      if (daily == "none")
        popts.daily_split = DailySplitMode::None;
      else if (daily == "a")
        popts.daily_split = DailySplitMode::PlatformA;
      else if (daily == "b")
        popts.daily_split = DailySplitMode::PlatformB;
      else if (daily == "both")
        popts.daily_split = DailySplitMode::Both;
      else
        throw ValidationError("--daily-split must be none, a, b or both");
      popts.fractions = {fractions[0], fractions[1], fractions[2]};
      return cmd_preprocess(prep_a, prep_b, prep_map, prep_out, popts);
    }
    if (tr->parsed()) {
      KvConfig kv;
      if (!tr_config.empty()) kv = KvConfig::from_file(tr_config);
      for (const auto& spec : kTrainFlags) {
        auto* opt = tr->get_option(spec.flag);
        if (opt->count() > 0) kv.set(spec.key, flag_values[spec.key]);
      }
      for (const auto& spec : kTrainSwitches) {
        auto* opt = tr->get_option(spec.flag);
        if (opt->count() > 0) kv.set(spec.key, "true");
      }
      return cmd_train(tr_dataset, tr_out, kv, tr_metrics);
    }
    if (ev->parsed())
      return cmd_evaluate(ev_ckpt, ev_dataset, ev_split, ev_metrics, ev_plans, ev_threads);
    if (ex->parsed())
      return cmd_export_attention(ex_ckpt, ex_dataset, ex_split, ex_pair, ex_out, ex_plans);
    if (gc->parsed())
      return cmd_gradcheck(gc_d, gc_k, gc_heads, gc_batch, gc_cab, gc_ft, gc_fm, gc_seed, gc_tol);
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

#include <benchmark/benchmark.h>

#include "mtlink/model.hpp"
#include "mtlink/rng.hpp"

namespace {

using namespace mtlink;

// A pair of length-S sequences with random tokens and times, as the forward
// pass sees them after preprocessing.
EncodedPair make_pair(std::size_t s, std::size_t vocab, Rng& rng) {
  EncodedPair pair;
  for (auto* seq : {&pair.a, &pair.b}) {
    seq->poi.resize(s);
    seq->t.resize(s);
    for (std::size_t i = 0; i < s; ++i) {
      seq->poi[i] = rng.uniform_int(0, static_cast<std::int64_t>(vocab) - 1);
      seq->t[i] = rng.uniform_int(0, 14 * 86400);
    }
    std::sort(seq->t.begin(), seq->t.end());
    seq->lat.resize(s);
    seq->lon.resize(s);
  }
  pair.label = 1;
  return pair;
}

void BM_ForwardPair(benchmark::State& state) {
  const std::size_t s = static_cast<std::size_t>(state.range(0));
  const std::size_t d = static_cast<std::size_t>(state.range(1));

  ModelConfig cfg;
  cfg.d = d;
  cfg.vocab_size = 512;
  Rng init(7);
  const ModelParams params = init_model(cfg, init);

  Rng data_rng(11);
  const EncodedPair pair = make_pair(s, cfg.vocab_size, data_rng);

  for (auto _ : state) {
    auto res = forward_pair(params, cfg, pair, nullptr, false);
    benchmark::DoNotOptimize(res.probability.item());
  }
  state.SetComplexityN(static_cast<std::int64_t>(s));
}

void BM_TrainStep(benchmark::State& state) {
  const std::size_t s = static_cast<std::size_t>(state.range(0));

  ModelConfig cfg;
  cfg.vocab_size = 512;
  Rng init(7);
  const ModelParams params = init_model(cfg, init);

  Rng data_rng(11);
  const EncodedPair pair = make_pair(s, cfg.vocab_size, data_rng);

  for (auto _ : state) {
    Rng rng(13);
    GradStore store;
    auto res = forward_pair(params, cfg, pair, &rng, true);
    auto loss = bce_term(res.probability, pair.label, 1.0);
    loss.backward(store);
    benchmark::DoNotOptimize(loss.item());
  }
}

}  // namespace

BENCHMARK(BM_ForwardPair)
    ->Args({32, 64})
    ->Args({64, 64})
    ->Args({128, 64})
    ->Args({32, 32})
    ->Args({64, 32})
    ->Args({128, 32})
    ->Unit(benchmark::kMillisecond);

BENCHMARK(BM_TrainStep)->Arg(32)->Arg(45)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mtlink/dataset.hpp"
#include "mtlink/synth.hpp"

using namespace mtlink;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("generator determinism: same seed, byte-identical files") {
  SynthConfig cfg;
  cfg.n_users = 5;
  cfg.seq_len_min_a = cfg.seq_len_min_b = 10;
  cfg.seq_len_max_a = cfg.seq_len_max_b = 15;
  cfg.seed = 42;

  namespace fs = std::filesystem;
  const std::string d1 = "/tmp/mtlink_gen1", d2 = "/tmp/mtlink_gen2";
  fs::create_directories(d1);
  fs::create_directories(d2);
  generate_to_files(cfg, d1);
  generate_to_files(cfg, d2);
  for (const char* name : {"checkins_a.csv", "checkins_b.csv", "identity_map.csv"}) {
    CHECK(slurp(d1 + "/" + name) == slurp(d2 + "/" + name));
    CHECK_FALSE(slurp(d1 + "/" + name).empty());
  }

  cfg.seed = 43;
  generate_to_files(cfg, d2);
  CHECK(slurp(d1 + "/checkins_a.csv") != slurp(d2 + "/checkins_a.csv"));
}

TEST_CASE("pure copy: cooccur=1, noise=0, jitter=0 makes B a cell-subsequence of A") {
  SynthConfig cfg;
  cfg.n_users = 4;
  cfg.seq_len_min_a = cfg.seq_len_max_a = 20;
  cfg.seq_len_min_b = cfg.seq_len_max_b = 12;
  cfg.cooccur_fraction = 1.0;
  cfg.noise_rate = 0.0;
  cfg.jitter_seconds = 0.0;
  cfg.seed = 7;

  auto out = generate(cfg);
  GridConfig grid{0.05, 0.0, 0.0};
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    std::vector<std::int64_t> cells_a, cells_b;
    for (const auto& p : out.checkins_a)
      if (p.user_id == out.identities.links[u].first) cells_a.push_back(grid_tokenize(p, grid));
    for (const auto& p : out.checkins_b)
      if (p.user_id == out.identities.links[u].second) cells_b.push_back(grid_tokenize(p, grid));
    REQUIRE(cells_b.size() == 12);

    // Subsequence check.
    std::size_t ai = 0;
    for (std::int64_t cell : cells_b) {
      while (ai < cells_a.size() && cells_a[ai] != cell) ++ai;
      REQUIRE(ai < cells_a.size());
      ++ai;
    }
  }
}

TEST_CASE("generated data flows through the preprocessing pipeline") {
  SynthConfig cfg;
  cfg.n_users = 12;
  cfg.seq_len_min_a = cfg.seq_len_min_b = 8;
  cfg.seq_len_max_a = cfg.seq_len_max_b = 12;
  cfg.seed = 11;
  auto out = generate(cfg);

  PreprocessOptions opts;
  opts.grid = {0.05, 0.0, 0.0};
  opts.min_len = 3;
  opts.neg_ratio = 2;
  opts.fractions = {0.5, 0.25, 0.25};
  opts.seed = 3;
  auto ds = preprocess(out.checkins_a, out.checkins_b, out.identities, opts);

  // 12 identities split 6/3/3; each contributes 1 positive + 2 negatives.
  CHECK(ds.train.size() == 18);
  CHECK(ds.val.size() == 9);
  CHECK(ds.test.size() == 9);
  CHECK_FALSE(ds.meta.vocab.empty());
  CHECK(ds.meta.t_ref >= cfg.t_start);

  // Class ratio holds per split.
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    std::size_t pos = 0;
    for (const auto& p : *split) pos += p.label == 1;
    CHECK(pos * 3 == split->size());
  }

  // Identity leakage guard.
  auto users = [](const std::vector<PairSample>& ps) {
    std::set<std::string> u;
    for (const auto& p : ps) {
      u.insert(p.seq_a.user_id);
      u.insert(p.seq_b.user_id);
    }
    return u;
  };
  auto tr = users(ds.train), te = users(ds.test);
  for (const auto& u : tr) CHECK(te.count(u) == 0);

  // Dense tokens within vocabulary bounds; coordinates preserved.
  for (const auto& p : ds.train) {
    for (const auto& q : p.seq_a.points) {
      CHECK(q.poi_id >= 0);
      CHECK(q.poi_id < static_cast<std::int64_t>(ds.meta.vocab.size()));
      CHECK(q.lat.has_value());
    }
  }

  // Dataset file round trip.
  const std::string path = "/tmp/mtlink_test_dataset.jsonl";
  save_dataset(ds, path);
  auto back = load_dataset(path);
  CHECK(back.train.size() == ds.train.size());
  CHECK(back.val.size() == ds.val.size());
  CHECK(back.test.size() == ds.test.size());
  CHECK(back.meta.vocab == ds.meta.vocab);
  CHECK(back.meta.t_ref == ds.meta.t_ref);
  REQUIRE(!back.train.empty());
  CHECK(back.train[0].seq_a.points[0].timestamp_utc == ds.train[0].seq_a.points[0].timestamp_utc);
  CHECK(*back.train[0].seq_a.points[0].lat ==
        doctest::Approx(*ds.train[0].seq_a.points[0].lat).epsilon(1e-12));
}

TEST_CASE("generator validation") {
  SynthConfig cfg;
  cfg.n_users = 1;
  CHECK_THROWS_AS(generate(cfg), ValidationError);
  cfg.n_users = 3;
  cfg.cooccur_fraction = 1.5;
  CHECK_THROWS_AS(generate(cfg), ValidationError);
}

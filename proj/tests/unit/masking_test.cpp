#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mtlink/gradcheck.hpp"
#include "mtlink/masking.hpp"

using namespace mtlink;

namespace {

AttentionMap map_from(std::size_t rows, std::size_t cols, std::vector<double> data) {
  AttentionMap m;
  m.weights = Mat(rows, cols);
  m.weights.data = std::move(data);
  return m;
}

/// Brute-force reference: sort (score, index) pairs of valid positions and
/// take the lowest floor(r * k_valid).
std::vector<std::size_t> oracle_select(const std::vector<double>& scores, double r,
                                       std::size_t k_valid) {
  std::vector<std::pair<double, std::size_t>> valid;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (std::isfinite(scores[i])) valid.push_back({scores[i], i});
  std::sort(valid.begin(), valid.end());
  const std::size_t n = static_cast<std::size_t>(std::floor(r * static_cast<double>(k_valid)));
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(valid[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("token importance examples") {
  auto one = map_from(1, 1, {1.0});
  auto s1 = token_importance(one, {1});
  REQUIRE(s1.size() == 1);
  CHECK(s1[0] == doctest::Approx(1.0));

  auto uniform = map_from(2, 3, {1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3});
  auto s2 = token_importance(uniform, {1, 1, 1});
  for (double v : s2) CHECK(v == doctest::Approx(2.0 / 3));

  // A key column of zeros scores 0: guaranteed lowest among positive columns.
  auto ignored = map_from(2, 3, {0.5, 0.0, 0.5, 0.7, 0.0, 0.3});
  auto s3 = token_importance(ignored, {1, 1, 1});
  CHECK(s3[1] == 0.0);
  CHECK(s3[1] < s3[0]);
  CHECK(s3[1] < s3[2]);

  // Padded keys get the -inf sentinel.
  auto s4 = token_importance(uniform, {1, 0, 1});
  CHECK(std::isinf(s4[1]));
  CHECK(s4[1] < 0);
}

TEST_CASE("select_mask examples") {
  auto empty = select_mask({1.0, 2.0}, 0.0, 2, 'A');
  CHECK(empty.n_mask == 0);
  CHECK(empty.indices.empty());

  auto plan = select_mask({9, 1, 8, 7, 6, 5, 4, 3, 2, 0}, 0.1, 10, 'B');
  CHECK(plan.n_mask == 1);
  REQUIRE(plan.indices.size() == 1);
  CHECK(plan.indices[0] == 9);
  CHECK(plan.target_platform == 'B');

  auto full = select_mask({3, 1, 2}, 1.0, 3, 'A');
  CHECK(full.n_mask == 3);
  CHECK(full.indices == std::vector<std::size_t>{0, 1, 2});

  // Ties break toward the smaller index.
  auto tied = select_mask({5, 5, 5, 5}, 0.5, 4, 'A');
  CHECK(tied.indices == std::vector<std::size_t>{0, 1});
}

TEST_CASE("select_mask equals the brute-force oracle on random cases") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + static_cast<std::size_t>(rng.uniform_int(0, 39));
    const std::size_t k_valid = 1 + static_cast<std::size_t>(
                                        rng.uniform_int(0, static_cast<std::int64_t>(k) - 1));
    std::vector<double> scores(k);
    for (std::size_t i = 0; i < k; ++i)
      scores[i] = rng.bernoulli(0.3) ? static_cast<double>(rng.uniform_int(0, 4))  // force ties
                                     : rng.uniform(0.0, 10.0);
    // Mark the padding tail with the sentinel.
    for (std::size_t i = k_valid; i < k; ++i)
      scores[i] = -std::numeric_limits<double>::infinity();
    const double r = rng.uniform(0.0, 1.0);

    auto plan = select_mask(scores, r, k_valid, 'A');
    auto expect = oracle_select(scores, r, k_valid);
    CHECK(plan.indices == expect);
    CHECK(plan.n_mask == expect.size());
    for (std::size_t idx : plan.indices) CHECK(idx < k_valid);  // padding never selected
  }
}

TEST_CASE("monotonicity: raising a selected score past the cut removes it") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 5 + static_cast<std::size_t>(rng.uniform_int(0, 10));
    std::vector<double> scores(k);
    for (double& s : scores) s = rng.uniform(0.0, 10.0);
    const double r = 0.4;
    auto plan = select_mask(scores, r, k, 'A');
    if (plan.n_mask == 0 || plan.n_mask >= k) continue;

    // (n_mask+1)-th smallest score.
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    const double cut = sorted[plan.n_mask];

    const std::size_t victim = plan.indices[0];
    scores[victim] = cut + 1.0;
    auto plan2 = select_mask(scores, r, k, 'A');
    CHECK(std::find(plan2.indices.begin(), plan2.indices.end(), victim) == plan2.indices.end());
  }
}

TEST_CASE("select_mask_random matches plan size and validity") {
  Rng rng(13);
  std::vector<std::uint8_t> valid = {1, 1, 0, 1, 1, 1, 0, 1};
  auto plan = select_mask_random(valid, 0.5, rng, 'B');
  CHECK(plan.n_mask == 3);  // floor(0.5 * 6)
  for (std::size_t idx : plan.indices) CHECK(valid[idx] == 1);
  CHECK(std::is_sorted(plan.indices.begin(), plan.indices.end()));
}

TEST_CASE("apply_mask examples") {
  Rng rng(14);
  auto z = Tensor::randn({4, 3}, rng, 1.0);
  auto z_alpha = Tensor::zeros({3});

  MaskPlan empty;
  auto same = apply_mask(z, empty, z_alpha);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(same.values()[i] == z.values()[i]);

  MaskPlan first;
  first.n_mask = 1;
  first.indices = {0};
  auto masked = apply_mask(z, first, z_alpha);
  for (std::size_t j = 0; j < 3; ++j) CHECK(masked.values()[j] == 0.0);
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(masked.values()[i * 3 + j] == z.values()[i * 3 + j]);  // bit-equal

  MaskPlan oob;
  oob.indices = {7};
  CHECK_THROWS_AS(apply_mask(z, oob, z_alpha), ContractError);
}

TEST_CASE("apply_mask is idempotent when re-substituting the embedding") {
  Rng rng(15);
  auto z = Tensor::randn({5, 4}, rng, 1.0);
  auto z_alpha = Tensor::randn({4}, rng, 1.0);
  MaskPlan plan;
  plan.n_mask = 2;
  plan.indices = {1, 3};

  auto once = apply_mask(z, plan, z_alpha);
  auto twice = apply_mask(once, plan, z_alpha);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice.values()[i] == once.values()[i]);
}

TEST_CASE("mask embedding gradient is the sum over masked rows") {
  Rng rng(16);
  auto z = Tensor::randn({4, 3}, rng, 1.0, true);
  auto z_alpha = Tensor::randn({3}, rng, 1.0, true);
  MaskPlan plan;
  plan.n_mask = 2;
  plan.indices = {0, 2};

  auto loss_fn = [&] {
    auto out = apply_mask(z, plan, z_alpha);
    Rng coeff(19);
    std::vector<double> c(out.size());
    for (double& x : c) x = coeff.uniform(-1.0, 1.0);
    return sum(mul(out, Tensor::from(out.shape(), c))).item();
  };
  {
    auto out = apply_mask(z, plan, z_alpha);
    Rng coeff(19);
    std::vector<double> c(out.size());
    for (double& x : c) x = coeff.uniform(-1.0, 1.0);
    sum(mul(out, Tensor::from(out.shape(), c))).backward();
  }
  auto res = finite_difference_check({{"z", z}, {"z_alpha", z_alpha}}, loss_fn, 1e-6, 1e-5);
  CHECK(res.max_rel_err < 1e-5);

  // Masked rows contribute no gradient to z.
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(z.grad()[0 * 3 + j] == 0.0);
    CHECK(z.grad()[2 * 3 + j] == 0.0);
    CHECK(z.grad()[1 * 3 + j] != 0.0);
  }
}

TEST_CASE("plan size is floor(r * k_valid) across the range") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k_valid = 1 + static_cast<std::size_t>(rng.uniform_int(0, 30));
    const double r = rng.uniform(0.0, 1.0);
    std::vector<double> scores(k_valid);
    for (double& s : scores) s = rng.uniform(0.0, 1.0);
    auto plan = select_mask(scores, r, k_valid, 'A');
    CHECK(plan.n_mask ==
          static_cast<std::size_t>(std::floor(r * static_cast<double>(k_valid))));
    CHECK(plan.indices.size() == plan.n_mask);
  }
}

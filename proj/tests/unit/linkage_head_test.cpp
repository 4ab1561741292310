#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mtlink/gradcheck.hpp"
#include "mtlink/linkage_head.hpp"

using namespace mtlink;

TEST_CASE("pool_and_concat examples") {
  // All rows equal v pools to v.
  auto a = Tensor::from({3, 2}, {4, 7, 4, 7, 4, 7});
  auto b = Tensor::from({1, 2}, {5, 5});
  auto f = pool_and_concat(a, b, {1, 1, 1}, {1});
  CHECK(f.shape() == Shape{4});
  CHECK(f.values()[0] == doctest::Approx(4.0));
  CHECK(f.values()[1] == doctest::Approx(7.0));

  // d=2 arithmetic means.
  auto a2 = Tensor::from({2, 2}, {1, 1, 3, 3});
  auto f2 = pool_and_concat(a2, b, {1, 1}, {1});
  CHECK(f2.values()[0] == doctest::Approx(2.0));
  CHECK(f2.values()[1] == doctest::Approx(2.0));
  CHECK(f2.values()[2] == doctest::Approx(5.0));
  CHECK(f2.values()[3] == doctest::Approx(5.0));

  // Appending a padded row changes nothing.
  auto a3 = Tensor::from({3, 2}, {1, 1, 3, 3, 999, 999});
  auto f3 = pool_and_concat(a3, b, {1, 1, 0}, {1});
  for (std::size_t i = 0; i < 4; ++i) CHECK(f3.values()[i] == f2.values()[i]);

  CHECK_THROWS_AS(pool_and_concat(a2, b, {0, 0}, {1}), DegenerateRowError);
}

TEST_CASE("predict examples") {
  Rng rng(1);
  auto mlp = init_predictor(4, rng);

  // Zero weights and biases: sigmoid(0) = 0.5.
  for (Tensor* t : {&mlp.w1, &mlp.b1, &mlp.w2, &mlp.b2})
    std::fill(t->values_mut().begin(), t->values_mut().end(), 0.0);
  auto p = predict(Tensor::from({8}, {1, 2, 3, 4, 5, 6, 7, 8}), mlp);
  CHECK(p.item() == doctest::Approx(0.5));

  // Force logit 2.0 through the bias.
  mlp.b2.values_mut()[0] = 2.0;
  auto p2 = predict(Tensor::zeros({8}), mlp);
  CHECK(p2.item() == doctest::Approx(0.880797).epsilon(1e-6));

  // Strictly inside (0,1) for finite inputs.
  Rng rng2(2);
  auto mlp2 = init_predictor(4, rng2);
  for (int i = 0; i < 20; ++i) {
    auto f = Tensor::randn({8}, rng2, 10.0);
    const double prob = predict(f, mlp2).item();
    CHECK(prob > 0.0);
    CHECK(prob < 1.0);
  }
}

TEST_CASE("inverse frequency weights") {
  auto w = inverse_frequency_weights(10, 60);  // 1:6
  CHECK(w.w_pos == doctest::Approx(70.0 / 20.0));
  CHECK(w.w_neg == doctest::Approx(70.0 / 120.0));
  // Normalized to mean 1 over the batch.
  CHECK((10 * w.w_pos + 60 * w.w_neg) / 70.0 == doctest::Approx(1.0));
  CHECK_THROWS_AS(inverse_frequency_weights(0, 5), ContractError);
}

TEST_CASE("weighted bce equals unweighted mean when weights are equal") {
  std::vector<double> p = {0.3, 0.9, 0.5, 0.1};
  std::vector<int> y = {0, 1, 1, 0};
  auto weighted = weighted_bce(Tensor::from({4}, p), y, 1.0, 1.0);
  double manual = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    manual += y[i] == 1 ? -std::log(p[i]) : -std::log(1.0 - p[i]);
  manual /= 4.0;
  CHECK(weighted.item() == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("loss invariant to batch permutation") {
  std::vector<double> p = {0.3, 0.9, 0.5, 0.1, 0.77};
  std::vector<int> y = {0, 1, 1, 0, 1};
  auto l1 = weighted_bce(Tensor::from({5}, p), y, 1.5, 0.5);
  std::vector<double> p2 = {0.77, 0.1, 0.9, 0.3, 0.5};
  std::vector<int> y2 = {1, 0, 1, 0, 1};
  auto l2 = weighted_bce(Tensor::from({5}, p2), y2, 1.5, 0.5);
  CHECK(l1.item() == doctest::Approx(l2.item()).epsilon(1e-15));
}

TEST_CASE("head gradient end to end") {
  Rng rng(3);
  auto mlp = init_predictor(4, rng);
  auto ha = Tensor::randn({3, 4}, rng, 1.0, true);
  auto hb = Tensor::randn({2, 4}, rng, 1.0, true);
  const std::vector<std::uint8_t> va(3, 1), vb(2, 1);

  auto loss_fn = [&] {
    auto prob = predict(pool_and_concat(ha, hb, va, vb), mlp);
    return bce_term(prob, 1, 1.0).item();
  };
  bce_term(predict(pool_and_concat(ha, hb, va, vb), mlp), 1, 1.0).backward();
  auto res = finite_difference_check({{"ha", ha},
                                      {"hb", hb},
                                      {"w1", mlp.w1},
                                      {"b1", mlp.b1},
                                      {"w2", mlp.w2},
                                      {"b2", mlp.b2}},
                                     loss_fn, 1e-6, 1e-5);
  CHECK(res.max_rel_err < 1e-5);
}

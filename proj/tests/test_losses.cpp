#include <cmath>

#include "adr/losses.hpp"
#include "doctest.h"

using namespace adr;

namespace {

SplitModel toy_model(std::uint64_t seed, int M = 3) {
  ArchitectureConfig cfg;
  cfg.preset = "mlp-toy";
  cfg.input_shape = {2};
  cfg.num_classes = M;
  return build_model(cfg, seed);
}

Tensor unit_batch(int n, int dim, std::uint64_t seed) {
  DetRng rng(seed);
  std::vector<double> d(static_cast<std::size_t>(n) * dim);
  for (auto& v : d) v = rng.uniform01();
  return Tensor({n, dim}, std::move(d));
}

}  // namespace

TEST_CASE("pair_weight follows the closed form") {
  CHECK(pair_weight(3, 3, 0.5) == 1.0);
  CHECK(pair_weight(3, 3, 0.01) == 1.0);
  CHECK(pair_weight(0, 1, 0.5) == doctest::Approx(-1.0).epsilon(1e-15));
  // alpha = 0.99 gives -1/99, not the rounded -0.01 figure.
  CHECK(pair_weight(0, 1, 0.99) ==
        doctest::Approx(-1.0 / 99.0).epsilon(1e-14));
  CHECK(std::fabs(pair_weight(0, 1, 0.99) - (-1.0 / 99.0)) < 1e-16);
  CHECK_THROWS_AS(pair_weight(0, 1, 0.0), ConfigError);
  CHECK_THROWS_AS(pair_weight(0, 1, 1.0), ConfigError);
  CHECK_THROWS_AS(pair_weight(0, 1, -0.2), ConfigError);
}

TEST_CASE("pair_weight is 1 on matches and strictly negative across labels") {
  DetRng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const double alpha = rng.uniform(1e-6, 1.0 - 1e-6);
    CHECK(pair_weight(5, 5, alpha) == 1.0);
    CHECK(pair_weight(5, 6, alpha) < 0.0);
  }
}

TEST_CASE("local compactness on simple pairs") {
  SUBCASE("identical representations give zero") {
    const Tensor r({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(local_compactness(r, r, PNorm::two) == 0.0);
  }
  SUBCASE("3-4-5 triangle, p=2") {
    const Tensor a({1, 2}, {3.0, 4.0});
    const Tensor b({1, 2}, {0.0, 0.0});
    CHECK(local_compactness(a, b, PNorm::two) == doctest::Approx(5.0));
  }
  SUBCASE("max coordinate, p=inf") {
    const Tensor a({1, 2}, {1.0, 2.0});
    const Tensor b({1, 2}, {0.0, 4.0});
    CHECK(local_compactness(a, b, PNorm::inf) == doctest::Approx(2.0));
  }
  SUBCASE("shape mismatch") {
    const Tensor a({1, 2}, {1.0, 2.0});
    const Tensor b({2, 2}, {0.0, 4.0, 1.0, 1.0});
    CHECK_THROWS_AS(local_compactness(a, b, PNorm::two), ShapeError);
  }
}

TEST_CASE("global compactness on hand-built batches") {
  SUBCASE("identical representations vanish regardless of labels") {
    const Tensor r({3, 2}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
    CHECK(global_compactness(r, {0, 1, 2}, 0.5, PNorm::two) == 0.0);
  }
  SUBCASE("single same-label pair gives the raw distance") {
    const Tensor r({2, 2}, {0.0, 0.0, 3.0, 4.0});
    CHECK(global_compactness(r, {1, 1}, 0.99, PNorm::two) ==
          doctest::Approx(5.0));
  }
  SUBCASE("single cross-label pair is weighted by (alpha-1)/alpha") {
    const Tensor r({2, 2}, {0.0, 0.0, 3.0, 4.0});
    CHECK(global_compactness(r, {0, 1}, 0.99, PNorm::two) ==
          doctest::Approx(-5.0 / 99.0).epsilon(1e-12));
  }
  SUBCASE("batch of one is zero with a warning") {
    const Tensor r({1, 2}, {0.3, 0.4});
    CHECK(global_compactness(r, {0}, 0.99, PNorm::two) == 0.0);
  }
}

TEST_CASE("global compactness is invariant under batch permutation") {
  DetRng rng(9);
  std::vector<double> data(8 * 3);
  for (auto& v : data) v = rng.uniform(-1.0, 1.0);
  std::vector<int> labels(8);
  for (auto& y : labels) y = static_cast<int>(rng.uniform_index(3));

  const double base =
      global_compactness(Tensor({8, 3}, data), labels, 0.99, PNorm::two);
  std::vector<int> perm(8);
  for (int i = 0; i < 8; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(perm);
    std::vector<double> pdata(8 * 3);
    std::vector<int> plabels(8);
    for (int i = 0; i < 8; ++i) {
      const int src = perm[static_cast<std::size_t>(i)];
      plabels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(src)];
      for (int d = 0; d < 3; ++d)
        pdata[static_cast<std::size_t>(i) * 3 + d] =
            data[static_cast<std::size_t>(src) * 3 + d];
    }
    const double permuted =
        global_compactness(Tensor({8, 3}, pdata), plabels, 0.99, PNorm::two);
    CHECK(permuted == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("supervision loss on degenerate predictions") {
  SUBCASE("uniform predictions cost 2 ln M") {
    SplitModel m = toy_model(1, 10);
    ArchitectureConfig cfg;
    cfg.preset = "mlp-toy";
    cfg.input_shape = {2};
    cfg.num_classes = 10;
    m = build_model(cfg, 1);
    for (auto& p : m.params())
      for (auto& v : p.value) v = 0.0;  // all-zero logits -> uniform rows
    const Tensor x = unit_batch(4, 2, 2);
    const double loss = supervision_loss(m, x, x, {0, 3, 7, 9});
    CHECK(loss == doctest::Approx(2.0 * std::log(10.0)).epsilon(1e-12));
  }
  SUBCASE("clean adversary reduces to twice the clean loss") {
    const SplitModel m = toy_model(5, 3);
    const Tensor x = unit_batch(6, 2, 6);
    const std::vector<int> y = {0, 1, 2, 0, 1, 2};
    const Tensor probs = m.predict(x);
    const double clean = mean_all(cross_entropy_rows(probs, y)).value();
    CHECK(supervision_loss(m, x, x, y) ==
          doctest::Approx(2.0 * clean).epsilon(1e-15));
  }
}

TEST_CASE("confidence loss matches closed-form entropies") {
  SUBCASE("uniform outputs, M=10") {
    ArchitectureConfig cfg;
    cfg.preset = "mlp-toy";
    cfg.input_shape = {2};
    cfg.num_classes = 10;
    SplitModel m = build_model(cfg, 2);
    for (auto& p : m.params())
      for (auto& v : p.value) v = 0.0;
    const Tensor x = unit_batch(3, 2, 3);
    CHECK(confidence_loss(m, x, x) ==
          doctest::Approx(2.0 * std::log(10.0)).epsilon(1e-12));
  }
  SUBCASE("one-hot rows have zero entropy") {
    const Tensor onehot({2, 3}, {1, 0, 0, 0, 1, 0});
    CHECK(mean_all(entropy_rows(onehot)).value() ==
          doctest::Approx(0.0).epsilon(1e-10));
  }
  SUBCASE("fifty-fifty row has entropy ln 2") {
    const Tensor half({1, 2}, {0.5, 0.5});
    CHECK(mean_all(entropy_rows(half)).value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("smoothness loss is the reference-anchored KL") {
  SUBCASE("identical distributions give zero") {
    const SplitModel m = toy_model(7, 3);
    const Tensor x = unit_batch(4, 2, 8);
    CHECK(smoothness_loss(m, x, x) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("KL((1,0) || (0.5,0.5)) = ln 2") {
    const Tensor p({1, 2}, {1.0, 0.0});
    const Tensor q({1, 2}, {0.5, 0.5});
    CHECK(mean_all(kl_rows(p, q)).value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-9));
  }
  SUBCASE("KL is non-negative on random distribution pairs") {
    DetRng rng(13);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> p(4), q(4);
      double ps = 0.0, qs = 0.0;
      for (int j = 0; j < 4; ++j) {
        p[static_cast<std::size_t>(j)] = rng.uniform(1e-6, 1.0);
        q[static_cast<std::size_t>(j)] = rng.uniform(1e-6, 1.0);
        ps += p[static_cast<std::size_t>(j)];
        qs += q[static_cast<std::size_t>(j)];
      }
      for (int j = 0; j < 4; ++j) {
        p[static_cast<std::size_t>(j)] /= ps;
        q[static_cast<std::size_t>(j)] /= qs;
      }
      const double kl =
          mean_all(kl_rows(Tensor({1, 4}, p), Tensor({1, 4}, q))).value();
      CHECK(kl >= -1e-12);
    }
  }
}

TEST_CASE("loss weights are validated") {
  LossWeights w;
  w.alpha = 1.0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w.alpha = 0.5;
  w.lambda_lc = -0.1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w.lambda_lc = 0.0;
  CHECK_NOTHROW(w.validate());
}

TEST_CASE("total loss with all lambdas zero is bitwise the supervision loss") {
  const SplitModel m = toy_model(17, 3);
  const Tensor x = unit_batch(8, 2, 18);
  const std::vector<int> y = {0, 1, 2, 0, 1, 2, 0, 1};
  AttackConfig adv;
  adv.method = AttackMethod::pgd;
  adv.epsilon = 0.1;
  adv.eta = 0.02;
  adv.k = 5;
  adv.seed = 3;
  LossWeights w;  // all zero
  const TotalLossResult r = total_loss(m, x, y, adv, w);
  CHECK(r.breakdown.total == r.breakdown.supervision);
  CHECK(r.breakdown.local_compactness == 0.0);
  CHECK(r.breakdown.global_compactness == 0.0);
  CHECK(r.breakdown.confidence == 0.0);
  CHECK(r.breakdown.smoothness == 0.0);
  const double direct = supervision_loss(m, x, r.x_adv, y);
  CHECK(r.breakdown.supervision == direct);
}

TEST_CASE("total loss equals the sum of independently computed terms") {
  const SplitModel m = toy_model(19, 3);
  const Tensor x = unit_batch(2, 2, 20);
  const std::vector<int> y = {0, 1};
  AttackConfig adv;
  adv.method = AttackMethod::pgd;
  adv.epsilon = 0.15;
  adv.eta = 0.03;
  adv.k = 8;
  adv.seed = 21;
  LossWeights w;
  w.lambda_lc = 1.0;
  w.lambda_gb = 1.0;
  w.lambda_conf = 1.0;
  w.lambda_smt = 1.0;
  const TotalLossResult r = total_loss(m, x, y, adv, w);

  const Tensor xa = r.x_adv;
  const double l_c = supervision_loss(m, x, xa, y);
  const double l_lc =
      local_compactness(m.intermediate(x), m.intermediate(xa), w.p);
  const double l_gb = global_compactness(m.intermediate(x), y, w.alpha, w.p);
  const double l_conf = confidence_loss(m, x, xa);
  const double l_smt = smoothness_loss(m, x, xa);

  CHECK(r.breakdown.supervision == doctest::Approx(l_c).epsilon(1e-14));
  CHECK(r.breakdown.local_compactness == doctest::Approx(l_lc).epsilon(1e-14));
  CHECK(r.breakdown.global_compactness == doctest::Approx(l_gb).epsilon(1e-14));
  CHECK(r.breakdown.confidence == doctest::Approx(l_conf).epsilon(1e-14));
  CHECK(r.breakdown.smoothness == doctest::Approx(l_smt).epsilon(1e-14));
  CHECK(r.breakdown.total ==
        doctest::Approx(l_c + l_lc + l_gb + l_conf + l_smt).epsilon(1e-12));
}

TEST_CASE("per-term signs: only the global term may go negative") {
  DetRng rng(23);
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const SplitModel m = toy_model(100 + trial, 3);
    const Tensor x = unit_batch(6, 2, 200 + trial);
    std::vector<int> y(6);
    for (auto& v : y) v = static_cast<int>(rng.uniform_index(3));
    AttackConfig adv;
    adv.epsilon = 0.1;
    adv.eta = 0.02;
    adv.k = 3;
    adv.seed = trial;
    LossWeights w;
    w.lambda_lc = 1.0;
    w.lambda_gb = 1.0;
    w.lambda_conf = 1.0;
    w.lambda_smt = 1.0;
    const TotalLossResult r = total_loss(m, x, y, adv, w);
    CHECK(r.breakdown.supervision >= 0.0);
    CHECK(r.breakdown.local_compactness >= 0.0);
    CHECK(r.breakdown.confidence >= 0.0);
    CHECK(r.breakdown.smoothness >= -1e-12);
  }
}

#include <doctest.h>

#include <cmath>

#include "aoe/error.hpp"
#include "aoe/metrics.hpp"
#include "aoe/model.hpp"
#include "oracles.hpp"

using namespace aoe;

TEST_CASE("FPR at TPR") {
  const std::vector<double> id{0.9, 0.8, 0.7}, low{0.1, 0.2};
  CHECK(fpr_at_tpr(id, low) == 0.0);

  std::vector<double> s(100);
  for (int i = 0; i < 100; ++i) s[i] = (i + 1) / 100.0;
  CHECK(std::abs(fpr_at_tpr(s, s) - 0.95) <= 1.0 / 100);

  // 20 evenly spaced ID scores from 0.9 down to 0.05.
  std::vector<double> even(20);
  for (int i = 0; i < 20; ++i) even[i] = 0.9 - i * (0.85 / 19);
  const std::vector<double> ood{0.55, 0.2, 0.1};
  double lam = 0;
  const double sweep = oracle::fpr_sweep(even, ood, 0.95, &lam);
  CHECK(lam == even[18]);
  CHECK(sweep == 1.0);
  CHECK(fpr_at_tpr(even, ood) == sweep);

  CHECK_THROWS_AS(fpr_at_tpr({}, ood), InvalidArgument);
}

TEST_CASE("AUROC") {
  const std::vector<double> a{0.9, 0.8}, b{0.1, 0.2};
  CHECK(auroc(a, b) == 1.0);
  CHECK(auroc(a, a) == 0.5);
  const std::vector<double> id{0.9, 0.8, 0.4}, ood{0.7, 0.3};
  CHECK(auroc(id, ood) == 5.0 / 6.0);
  CHECK(oracle::auroc_pairs(id, ood) == 5.0 / 6.0);
  CHECK_THROWS_AS(auroc(id, {}), InvalidArgument);
}

TEST_CASE("rank statistics against brute force") {
  SeededRng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> id(1 + rng.below(1000)), ood(1 + rng.below(1000));
    const double grid = t % 2 ? 50.0 : 1e9;  // half the instances tie heavily
    for (double& v : id) v = std::round(rng.uniform(0.2, 1.0) * grid) / grid;
    for (double& v : ood) v = std::round(rng.uniform(0.0, 0.8) * grid) / grid;
    CHECK(auroc(id, ood) == oracle::auroc_pairs(id, ood));
    CHECK(fpr_at_tpr(id, ood) == oracle::fpr_sweep(id, ood, 0.95));

    auto id2 = id, ood2 = ood;
    for (double& v : id2) v = 2 * v + 1;
    for (double& v : ood2) v = 2 * v + 1;
    CHECK(auroc(id2, ood2) == auroc(id, ood));
    CHECK(fpr_at_tpr(id2, ood2) == fpr_at_tpr(id, ood));
    for (double& v : id2) v = std::exp(v);
    for (double& v : ood2) v = std::exp(v);
    CHECK(auroc(id2, ood2) == auroc(id, ood));

    // Raising the threshold (lower TPR target) never raises FPR.
    CHECK(fpr_at_tpr(id, ood, 0.5) <= fpr_at_tpr(id, ood, 0.95));
  }
}

TEST_CASE("ID accuracy") {
  const Matrix onehot(3, 3, {5, 0, 0, 0, 5, 0, 0, 0, 5});
  const std::vector<int> y{0, 1, 2};
  CHECK(id_accuracy(onehot, y) == 1.0);
  const Matrix flat(4, 4, 1.0);
  CHECK(id_accuracy(flat, std::vector<int>{0, 1, 2, 3}) == 0.25);
  const Matrix some(3, 2, {1, 0, 0, 1, 1, 0});
  CHECK(id_accuracy(some, std::vector<int>{0, 1, 1}) == doctest::Approx(2.0 / 3));
  CHECK_THROWS_AS(id_accuracy(some, std::vector<int>{0, -1, 1}), InvalidArgument);
  CHECK_THROWS_AS(id_accuracy(some, std::vector<int>{0, 1}), InvalidArgument);
}

TEST_CASE("separation and over-softening margins") {
  const std::vector<double> a{0.5, 0.5};
  CHECK(separation_margin(a, a) == 0.0);
  CHECK(separation_margin(std::vector<double>{1, 1}, std::vector<double>{0.25, 0.25}) == 0.75);
  CHECK(separation_margin(std::vector<double>{0.9, 0.7}, std::vector<double>{0.4, 0.2}) == doctest::Approx(0.5));

  CHECK(oversoftening_mean_margin(Matrix(3, 4, 0.3)) == 0.0);
  CHECK(oversoftening_mean_margin(Matrix(1, 3, {2, 1, 0})) == 1.0);
  CHECK(oversoftening_mean_margin(Matrix(2, 3, {2, 1, 0, 3, 0, 0})) == 2.0);
  CHECK_THROWS_AS(oversoftening_mean_margin(Matrix(0, 3)), InvalidArgument);
}

TEST_CASE("evaluate assembles every field") {
  const Matrix id(4, 2, {3, 0, 0, 3, 2, 0, -1, 0});
  const std::vector<int> y{0, 1, 0, 1};
  const Matrix ood(2, 2, {0.1, 0, 0, 0});
  const auto r = evaluate_logits(id, y, ood, ScoreKind::msp());
  CHECK(r.n_id == 4);
  CHECK(r.n_ood == 2);
  CHECK(r.id_acc == 1.0);
  CHECK(r.auroc == 1.0);
  CHECK(r.fpr95 == 0.0);
  CHECK(r.oversoftening_mean_margin == doctest::Approx(0.05));
  CHECK(r.margins.mu_id == doctest::Approx((3 + 3 + 2 + 1) / 4.0));
  CHECK(r.margins.mu_ood == doctest::Approx(0.05));
  CHECK(r.margins.nu_ood_sq == doctest::Approx(0.0025));
  CHECK(r.margins.frac_id_negative_margin == 0.0);

  const auto wrong = evaluate_logits(id, std::vector<int>{1, 1, 0, 1}, ood, ScoreKind::energy());
  CHECK(wrong.margins.frac_id_negative_margin == 0.25);
  CHECK(wrong.id_acc == 0.75);
}

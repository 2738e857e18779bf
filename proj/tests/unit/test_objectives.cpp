#include <doctest.h>

#include <cmath>
#include <numbers>

#include "aoe/error.hpp"
#include "aoe/model.hpp"
#include "aoe/objectives.hpp"
#include "oracles.hpp"

using namespace aoe;

namespace {

Matrix row_matrix(std::vector<double> z) {
  const auto k = z.size();
  return Matrix(1, k, std::move(z));
}

Matrix random_logits(SeededRng& rng, std::size_t n, std::size_t k, double scale) {
  std::vector<double> d(n * k);
  for (double& v : d) v = rng.uniform(-scale, scale);
  return Matrix(n, k, std::move(d));
}

std::vector<double> flat(const Matrix& m) { return {m.data().begin(), m.data().end()}; }

// Term A and B straight from the definitions in long double.
long double term_a(const Matrix& z, long double T, KlDirection dir) {
  long double s = 0.0L;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const std::vector<double> row(z.row(r).begin(), z.row(r).end());
    const auto q = oracle::softmax(row, T);
    const std::vector<long double> u(row.size(), 1.0L / static_cast<long double>(row.size()));
    s += dir == KlDirection::uniform_first ? oracle::kl(u, q) : oracle::kl(q, u);
  }
  return s / static_cast<long double>(z.rows());
}

long double term_b(const Matrix& z, long double T) {
  long double s = 0.0L;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const std::vector<double> row(z.row(r).begin(), z.row(r).end());
    s += oracle::kl(oracle::softmax(row, T), oracle::softmax(row, 1.0L));
  }
  return s / static_cast<long double>(z.rows());
}

// KL(q_fixed || p(z)) averaged over rows, with q held constant.
long double term_b_detached(const Matrix& z, const Matrix& q_rows) {
  long double s = 0.0L;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const std::vector<double> row(z.row(r).begin(), z.row(r).end());
    const std::vector<long double> q(q_rows.row(r).begin(), q_rows.row(r).end());
    s += oracle::kl(q, oracle::softmax(row, 1.0L));
  }
  return s / static_cast<long double>(z.rows());
}

long double ce(const Matrix& z, std::span<const int> y) {
  long double s = 0.0L;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const std::vector<double> row(z.row(r).begin(), z.row(r).end());
    s -= std::log(oracle::softmax(row)[static_cast<std::size_t>(y[r])]);
  }
  return s / static_cast<long double>(z.rows());
}

// Per-row upstream gradients are the derivative of the mean loss times N.
std::vector<double> scaled(const Matrix& d) {
  auto v = flat(d);
  for (double& x : v) x /= static_cast<double>(d.rows());
  return v;
}

}  // namespace

TEST_CASE("alpha schedules") {
  AlphaSchedule s;
  s.kind = AlphaKind::exponential;
  CHECK(alpha_at(s, 0) == 0.0);
  CHECK(alpha_at(s, 35) == doctest::Approx(1 - std::exp(-1.0)));
  s.kind = AlphaKind::cosine;
  CHECK(alpha_at(s, 99) == doctest::Approx(1.0).epsilon(1e-15));
  s.kind = AlphaKind::linear;
  CHECK(alpha_at(s, 49) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(alpha_at(s, 500) == 1.0);
  s.kind = AlphaKind::fixed;
  s.c = 0.3;
  CHECK(alpha_at(s, 17) == 0.3);
  s.horizon = 0;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  CHECK_THROWS_AS(parse_alpha_kind("step"), InvalidArgument);
}

TEST_CASE("temperature state") {
  TemperatureState t;
  CHECK(t.T == 1.5);
  t.T = 12.0;
  t.clamp();
  CHECK(t.T == 10.0);
  t.T = 0.2;
  t.clamp();
  CHECK(t.T == 1.0);
  t.lr_T = -1.0;
  CHECK_THROWS_AS(t.validate(), InvalidArgument);
}

TEST_CASE("OE loss") {
  const std::vector<int> y{0};
  const auto id = row_matrix({3, 0, 0});
  const auto zero = loss_oe(id, y, Matrix(2, 3), 1.0);
  CHECK(zero.loss.align_T_to_uniform == 0.0);
  for (double v : zero.d_ood.data()) CHECK(v == 0.0);

  const auto g = loss_oe(id, y, row_matrix({2, 1, 0}), 1.0);
  CHECK(std::abs(g.d_ood(0, 0) - 0.3319) <= 1e-4);
  CHECK(std::abs(g.d_ood(0, 1) + 0.0886) <= 1e-4);
  CHECK(std::abs(g.d_ood(0, 2) + 0.2433) <= 1e-4);

  const auto a0 = loss_oe(id, y, row_matrix({2, 1, 0}), 0.0);
  const auto c = loss_ce(id, y);
  CHECK(a0.loss.total == c.loss.total);
  CHECK(a0.d_id == c.d_id);
  for (double v : a0.d_ood.data()) CHECK(v == 0.0);
}

TEST_CASE("soft targets") {
  const auto z = row_matrix({2, 1, 0});
  CHECK(soft_target(z, 1.0)[0] == softmax(z.row(0)));
  const auto q = soft_target(z, 2.0)[0];
  CHECK(std::abs(q[0] - 0.5064) <= 1e-4);
  CHECK(std::abs(q[1] - 0.3071) <= 1e-4);
  CHECK(std::abs(q[2] - 0.1863) <= 1e-4);

  SeededRng rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto zz = random_logits(rng, 1, 4, 3.0);
    CHECK(entropy(soft_target(zz, 10.0)[0]) > entropy(softmax(zz.row(0))));
  }
  CHECK_THROWS_AS(soft_target(z, 0.0), InvalidArgument);
}

TEST_CASE("AOE loss values") {
  const std::vector<int> y{1};
  const auto id = row_matrix({0, 2, 0});
  const auto z = row_matrix({2, 1, 0});
  TemperatureState temp;

  temp.T = 1.0;
  const auto at1 = loss_aoe(id, y, z, temp, 1.0, AoeMode::joint);
  CHECK(at1.loss.align_pred_to_target == 0.0);

  temp.T = 2.0;
  const auto g = loss_aoe(id, y, z, temp, 1.0, AoeMode::joint);
  const auto expected_b = kl_divergence(soft_target(z, 2.0)[0], softmax(z.row(0)));
  CHECK(std::abs(g.loss.align_pred_to_target - expected_b) <= 1e-10);
  CHECK(std::abs(g.loss.align_pred_to_target - static_cast<double>(term_b(z, 2.0L))) <= 1e-12);
  CHECK(std::abs(g.loss.align_T_to_uniform - static_cast<double>(term_a(z, 2.0L, KlDirection::uniform_first))) <=
        1e-12);
  CHECK(g.loss.total == doctest::Approx(g.loss.ce_id + g.loss.align_T_to_uniform + g.loss.align_pred_to_target));

  const auto alt = loss_aoe(id, y, z, temp, 0.5, AoeMode::alternating);
  CHECK(alt.loss.total == doctest::Approx(alt.loss.ce_id + 0.5 * alt.loss.align_pred_to_target));

  const auto uniform = loss_aoe(id, y, Matrix(3, 3), temp, 1.0, AoeMode::joint);
  CHECK(uniform.loss.align_T_to_uniform == 0.0);
  CHECK(uniform.d_T == 0.0);
}

TEST_CASE("detached term-B gradient is p - q_T") {
  const auto z = row_matrix({2, 1, 0});
  TemperatureState temp;
  temp.T = 2.0;
  const auto g = loss_aoe(Matrix(0, 3), {}, z, temp, 1.0, AoeMode::alternating);
  const auto p = softmax(z.row(0));
  const auto q = softmax(z.row(0), 2.0);
  for (std::size_t k = 0; k < 3; ++k) CHECK(g.d_ood(0, k) == doctest::Approx(p[k] - q[k]).epsilon(1e-14));
}

TEST_CASE("loss gradients match central finite differences") {
  SeededRng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + rng.below(7);
    const std::size_t n_id = 1 + rng.below(4), n_ood = 1 + rng.below(4);
    const auto id = random_logits(rng, n_id, k, 4.0);
    const auto ood = random_logits(rng, n_ood, k, 4.0);
    std::vector<int> y(n_id);
    for (int& v : y) v = static_cast<int>(rng.below(k));
    const double alpha = rng.uniform(0.1, 1.0);
    TemperatureState temp;
    temp.T = rng.uniform(1.1, 9.9);
    const auto dir = rng.below(2) ? KlDirection::uniform_first : KlDirection::target_first;
    CAPTURE(trial);

    // CE on ID rows.
    const auto ce_fd = oracle::gradient([&](const std::vector<double>& v) {
      return static_cast<double>(ce(Matrix(n_id, k, v), y));
    }, flat(id));
    CHECK(oracle::rel_error(scaled(loss_ce(id, y).d_id), ce_fd) <= 1e-5);

    // OE term on OOD rows.
    const auto oe_fd = oracle::gradient([&](const std::vector<double>& v) {
      return static_cast<double>(alpha * term_a(Matrix(n_ood, k, v), 1.0L, KlDirection::uniform_first));
    }, flat(ood));
    CHECK(oracle::rel_error(scaled(loss_oe(id, y, ood, alpha).d_ood), oe_fd) <= 1e-5);

    // Full-graph joint and alternating objectives.
    const AoeOptions full{dir, false};
    const auto joint_fd = oracle::gradient([&](const std::vector<double>& v) {
      const Matrix m(n_ood, k, v);
      return static_cast<double>(alpha * (term_a(m, temp.T, dir) + term_b(m, temp.T)));
    }, flat(ood));
    CHECK(oracle::rel_error(scaled(loss_aoe(id, y, ood, temp, alpha, AoeMode::joint, full).d_ood), joint_fd) <= 1e-5);
    const auto alt_fd = oracle::gradient([&](const std::vector<double>& v) {
      return static_cast<double>(alpha * term_b(Matrix(n_ood, k, v), temp.T));
    }, flat(ood));
    CHECK(oracle::rel_error(scaled(loss_aoe(id, y, ood, temp, alpha, AoeMode::alternating, full).d_ood), alt_fd) <=
          1e-5);

    // Detached target: q_T frozen at its current value.
    Matrix q(n_ood, k);
    for (std::size_t r = 0; r < n_ood; ++r) softmax_into(ood.row(r), temp.T, q.row(r));
    const AoeOptions detached{dir, true};
    const auto det_b = oracle::gradient([&](const std::vector<double>& v) {
      return static_cast<double>(alpha * term_b_detached(Matrix(n_ood, k, v), q));
    }, flat(ood));
    const auto det_a = oracle::gradient([&](const std::vector<double>& v) {
      return static_cast<double>(alpha * term_a(Matrix(n_ood, k, v), temp.T, dir));
    }, flat(ood));
    std::vector<double> det_joint(det_b.size());
    for (std::size_t i = 0; i < det_b.size(); ++i) det_joint[i] = det_a[i] + det_b[i];
    CHECK(oracle::rel_error(scaled(loss_aoe(id, y, ood, temp, alpha, AoeMode::joint, detached).d_ood), det_joint) <=
          1e-5);
    CHECK(oracle::rel_error(scaled(loss_aoe(id, y, ood, temp, alpha, AoeMode::alternating, detached).d_ood), det_b) <=
          1e-5);

    // dL/dT, h = 1e-6.
    auto fd_T = [&](auto&& f) {
      const double h = 1e-6;
      return (f(temp.T + h) - f(temp.T - h)) / (2 * h);
    };
    const double joint_dT = fd_T([&](double T) {
      return static_cast<double>(alpha * (term_a(ood, T, dir) + term_b(ood, T)));
    });
    const double alt_dT = fd_T([&](double T) { return static_cast<double>(term_a(ood, T, dir)); });
    const double got_joint = loss_aoe(id, y, ood, temp, alpha, AoeMode::joint, detached).d_T;
    const double got_alt = loss_aoe(id, y, ood, temp, alpha, AoeMode::alternating, detached).d_T;
    CHECK(oracle::rel_error({got_joint}, {joint_dT}) <= 1e-5);
    CHECK(oracle::rel_error({got_alt}, {alt_dT}) <= 1e-5);
  }
}

TEST_CASE("K+1 variant slices the first K columns") {
  TemperatureState temp;
  temp.T = 2.0;
  const auto a = loss_aoe_kplus1(row_matrix({2, 1, 0, 5}), temp, 1.0, AoeMode::joint);
  const auto b = loss_aoe_kplus1(row_matrix({2, 1, 0, -40}), temp, 1.0, AoeMode::joint);
  const auto ref = loss_aoe(Matrix(0, 3), {}, row_matrix({2, 1, 0}), temp, 1.0, AoeMode::joint);
  CHECK(a.loss.total == b.loss.total);
  CHECK(std::abs(a.loss.total - ref.loss.total) <= 1e-12);
  CHECK(std::abs(a.d_T - ref.d_T) <= 1e-12);
  CHECK(a.d_ood(0, 3) == 0.0);

  temp.T = 1.0;
  const auto two = loss_aoe_kplus1(row_matrix({std::log(2.0), 0.0, 3.0}), temp, 1.0, AoeMode::joint);
  CHECK(two.loss.align_pred_to_target == 0.0);
  CHECK_THROWS_AS(loss_aoe_kplus1(row_matrix({1, 2}), temp, 1.0, AoeMode::joint), InvalidArgument);
}

TEST_CASE("fixed temperature with uniform targets approaches OE") {
  SeededRng rng(8);
  for (int t = 0; t < 50; ++t) {
    const auto z = random_logits(rng, 3, 4, 1.0);
    const auto oe = loss_oe(Matrix(0, 4), {}, z, 1.0);
    double ref = 0.0, var_bound = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
      ref += kl_divergence(ProbVector::uniform(4), softmax(z.row(r)));
      double mu = 0.0, sq = 0.0;
      for (double v : z.row(r)) mu += v / 4;
      for (double v : z.row(r)) sq += (v - mu) * (v - mu) / 4;
      var_bound = std::max(var_bound, sq);
    }
    CHECK(std::abs(oe.loss.align_T_to_uniform - ref / 3) <= 1e-12);

    // Distillation to s(z / T0) differs from the uniform target by about Var(z) / T0.
    TemperatureState temp;
    temp.T = 10.0;
    const auto at_max = loss_aoe(Matrix(0, 4), {}, z, temp, 1.0, AoeMode::alternating);
    CHECK(std::abs(at_max.loss.align_pred_to_target - oe.loss.align_T_to_uniform) <= 1.5 * var_bound / 10.0);
    temp.T = 1e6;
    const auto far = loss_aoe(Matrix(0, 4), {}, z, temp, 1.0, AoeMode::alternating);
    CHECK(std::abs(far.loss.align_pred_to_target - oe.loss.align_T_to_uniform) <= 1e-5);
  }
}

TEST_CASE("term A descent in T never increases KL(U || q_T)") {
  SeededRng rng(9);
  for (int t = 0; t < 50; ++t) {
    const auto z = random_logits(rng, 8, 5, 4.0);
    TemperatureState temp;
    temp.T = rng.uniform(1.0, 10.0);
    temp.lr_T = 0.01;
    const double before = static_cast<double>(term_a(z, temp.T, KlDirection::uniform_first));
    const auto g = loss_aoe(Matrix(0, 5), {}, z, temp, 1.0, AoeMode::alternating);
    temp.T -= temp.lr_T * g.d_T;
    temp.clamp();
    CHECK(static_cast<double>(term_a(z, temp.T, KlDirection::uniform_first)) <= before + 1e-15);
  }
}

namespace {

struct Setup {
  MlpParams params;
  OptimizerState opt;
  LabeledBatch id;
  Matrix ood;
};

Setup make_setup(std::uint64_t seed) {
  SeededRng rng(seed);
  Setup s;
  s.params = init_params({2, 8, 3}, rng);
  s.opt = OptimizerState::for_params(s.params, 0.1, 0.9, 5e-4, 10);
  std::vector<double> x(12), o(10);
  for (double& v : x) v = rng.uniform(-2, 2);
  for (double& v : o) v = rng.uniform(-6, 6);
  s.id = {Matrix(6, 2, x), {0, 1, 2, 0, 1, 2}};
  s.ood = Matrix(5, 2, o);
  return s;
}

}  // namespace

TEST_CASE("step reductions") {
  SUBCASE("alpha = 0 joint step is a CE step with T unchanged") {
    auto a = make_setup(1), b = make_setup(1);
    TemperatureState temp;
    joint_step(a.params, a.opt, temp, a.id, a.ood, 0.0);
    ce_step(b.params, b.opt, b.id);
    CHECK(a.params == b.params);
    CHECK(temp.T == 1.5);
  }
  SUBCASE("eta_T = 0 alternating equals fixed temperature") {
    auto a = make_setup(2), b = make_setup(2);
    TemperatureState ta, tb;
    ta.T = tb.T = 3.0;
    ta.lr_T = 0.0;
    for (int i = 0; i < 5; ++i) {
      alternating_step(a.params, a.opt, ta, a.id, a.ood, 0.7);
      fixed_temperature_step(b.params, b.opt, tb, b.id, b.ood, 0.7);
    }
    CHECK(a.params == b.params);
    CHECK(ta.T == 3.0);
  }
  SUBCASE("uniform OOD predictions freeze T") {
    auto a = make_setup(3);
    a.params.weights.back() = Matrix(3, 8);
    a.params.biases.back() = {0.0, 0.0, 0.0};
    TemperatureState temp;
    temp.T = 4.0;
    auto zero_out = a;
    alternating_step(a.params, a.opt, temp, a.id, a.ood, 1.0);
    CHECK(temp.T == 4.0);
    TemperatureState t2;
    t2.T = 4.0;
    joint_step(zero_out.params, zero_out.opt, t2, zero_out.id, zero_out.ood, 1.0);
    CHECK(t2.T == 4.0);
  }
  SUBCASE("T clamp holds along a trajectory") {
    auto a = make_setup(4);
    TemperatureState temp;
    temp.T = 9.9;
    temp.lr_T = 500.0;
    for (int i = 0; i < 50; ++i) {
      alternating_step(a.params, a.opt, temp, a.id, a.ood, 1.0);
      CHECK((temp.T >= 1.0 && temp.T <= 10.0));
    }
  }
}

TEST_CASE("one temperature step on a single OOD row") {
  // Hidden-free net whose logits equal its input: x = [2, 1, 0] gives z = [2, 1, 0].
  auto params = MlpParams::zeros({3, 3});
  params.weights[0] = Matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto opt = OptimizerState::for_params(params, 0.1, 0.9, 0.0, 10);
  TemperatureState temp;
  temp.T = 2.0;
  temp.lr_T = 0.1;
  const LabeledBatch id{Matrix(1, 3, {0, 0, 1}), {2}};
  const auto z = row_matrix({2, 1, 0});
  alternating_step(params, opt, temp, id, z, 1.0);

  const double h = 1e-6;
  const double grad = static_cast<double>(term_a(z, 2.0L + h, KlDirection::uniform_first) -
                                          term_a(z, 2.0L - h, KlDirection::uniform_first)) /
                      (2 * h);
  CHECK(std::abs(temp.T - (2.0 - 0.1 * grad)) <= 1e-6);
}

#include "aoe/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aoe/detection.hpp"
#include "aoe/error.hpp"

namespace aoe {

namespace {

void require_classes(std::span<const double> z, const char* what) {
  if (z.size() < 2) throw InvalidArgument(std::string(what) + ": need at least 2 logits");
}

// z - eta * grad, elementwise.
std::vector<double> step(std::span<const double> z, std::span<const double> grad, double eta) {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - eta * grad[i];
  return out;
}

}  // namespace

MarginReport logit_margin(std::span<const double> z) {
  require_classes(z, "logit_margin");
  std::size_t a = 0;
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (z[i] > z[a]) a = i;
  }
  std::size_t b = a == 0 ? 1 : 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i != a && z[i] > z[b]) b = i;
  }
  return {z[a] - z[b], a, b, runner_up_mass(z, a, b)};
}

double runner_up_mass(std::span<const double> z, std::size_t a, std::size_t b, double T) {
  double r = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (k != a && k != b) r += std::exp((z[k] - z[b]) / T);
  }
  return r;
}

double h_func(double x, double R) {
  if (!(R >= 0.0)) throw InvalidArgument("h_func: R must be non-negative");
  // Divide through by e^x for positive x so large margins cannot overflow.
  if (x > 0.0) return -std::expm1(-x) / (1.0 + (1.0 + R) * std::exp(-x));
  return std::expm1(x) / (std::exp(x) + 1.0 + R);
}

double margin_contraction(std::span<const double> z, double T, double eta) {
  const auto mr = logit_margin(z);
  const double r_T = runner_up_mass(z, mr.a, mr.b, T);
  return eta * (h_func(mr.m, mr.R) - h_func(mr.m / T, r_T));
}

double predicted_margin_after_step(std::span<const double> z, double T, double eta) {
  return logit_margin(z).m - margin_contraction(z, T, eta);
}

Thm2Check verify_thm2(std::span<const double> z, double T, double eta) {
  const auto mr = logit_margin(z);
  const auto p = softmax(z, 1.0);
  const auto q = softmax(z, T);
  std::vector<double> grad(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) grad[k] = p[k] - q[k];
  const auto zp = step(z, grad, eta);

  Thm2Check out;
  out.explicit_margin = zp[mr.a] - zp[mr.b];
  out.predicted_margin = predicted_margin_after_step(z, T, eta);
  out.residual = std::abs(out.explicit_margin - out.predicted_margin);
  const auto after = logit_margin(zp);
  out.argmax_changed = after.a != mr.a || after.b != mr.b;
  return out;
}

std::vector<PairGap> verify_prop1(std::span<const double> z, double eta) {
  require_classes(z, "verify_prop1");
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = i + 1; j < z.size(); ++j) {
      const double g = std::abs(z[i] - z[j]);
      if (g > 0.0) min_gap = std::min(min_gap, g);
    }
  }
  if (!(eta > 0.0) || eta > min_gap / 2.0) {
    throw PreconditionViolated("verify_prop1: eta must lie in (0, min non-zero gap / 2]");
  }
  const auto p = softmax(z, 1.0);
  const double inv_k = 1.0 / static_cast<double>(z.size());
  std::vector<double> grad(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) grad[k] = p[k] - inv_k;
  const auto zp = step(z, grad, eta);

  std::vector<PairGap> out;
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = i + 1; j < z.size(); ++j) {
      PairGap g{i, j, std::abs(z[i] - z[j]), std::abs(zp[i] - zp[j]), false};
      g.contracted = g.after <= g.before + 1e-12;
      out.push_back(g);
    }
  }
  return out;
}

ContractionCurve contraction_curve(std::span<const double> z, double eta, std::span<const double> T_grid) {
  const auto mr = logit_margin(z);
  ContractionCurve out;
  out.delta_m_infinity = eta * h_func(mr.m, mr.R);
  out.strictly_ordered = true;
  out.monotone_in_T = true;
  for (double T : T_grid) {
    if (!(T > 1.0)) throw InvalidArgument("contraction_curve: grid temperatures must exceed 1");
    const double dm = margin_contraction(z, T, eta);
    if (!(dm > 0.0 && dm < out.delta_m_infinity)) out.strictly_ordered = false;
    if (!out.points.empty() && T > out.points.back().T && dm < out.points.back().delta_m) out.monotone_in_T = false;
    out.points.push_back({T, dm});
  }
  return out;
}

MspBounds msp_margin_bounds(std::span<const double> z) {
  const auto mr = logit_margin(z);
  const double k = static_cast<double>(z.size());
  const double e = std::exp(-mr.m);
  return {1.0 / (1.0 + (k - 1.0) * e), msp_score(z), 1.0 / (1.0 + e)};
}

GenBoundConstants genbound_constants(const Matrix& logit_batch) {
  if (logit_batch.rows() == 0) throw InvalidArgument("genbound_constants: empty batch");
  if (logit_batch.cols() < 2) throw InvalidArgument("genbound_constants: need at least 2 logits");
  const double k = static_cast<double>(logit_batch.cols());
  double c1 = 0.0, c2 = 0.0;
  GenBoundConstants out;
  for (std::size_t r = 0; r < logit_batch.rows(); ++r) {
    const auto z = logit_batch.row(r);
    const auto p = softmax(z, 1.0);
    double mu = 0.0, sq = 0.0, pf = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      mu += z[i];
      sq += z[i] * z[i];
      pf += p[i] * z[i];
    }
    mu /= k;
    const double var = std::max(sq / k - mu * mu, 0.0);
    out.mu_x.push_back(mu);
    out.var_f.push_back(var);
    c1 += pf - mu;
    c2 += var;
  }
  const double n = static_cast<double>(logit_batch.rows());
  auto consts = genbound_constants(c1 / n, 0.5 * c2 / n);
  consts.mu_x = std::move(out.mu_x);
  consts.var_f = std::move(out.var_f);
  return consts;
}

GenBoundConstants genbound_constants(double C1_prime, double C2_prime) {
  GenBoundConstants out;
  out.C1_prime = C1_prime;
  out.C2_prime = C2_prime;
  if (C1_prime > 0.0) {
    out.T_star = 2.0 * C2_prime / C1_prime;
    if (C2_prime > 0.0) out.g_at_Tstar = -C1_prime * C1_prime / (4.0 * C2_prime);
  }
  return out;
}

double genbound_g(double C1_prime, double C2_prime, double T) { return -C1_prime / T + C2_prime / (T * T); }

OptimalTemperatureCheck verify_optimal_temperature(const GenBoundConstants& consts, std::span<const double> grid) {
  if (!(consts.C1_prime > 0.0) || !(consts.C2_prime > 0.0)) {
    throw InvalidArgument("verify_optimal_temperature: need C1' > 0 and C2' > 0");
  }
  if (grid.size() < 2) throw InvalidArgument("verify_optimal_temperature: grid needs at least two points");
  OptimalTemperatureCheck out;
  out.T_star = 2.0 * consts.C2_prime / consts.C1_prime;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) throw InvalidArgument("verify_optimal_temperature: grid temperatures must be positive");
    if (i > 0) {
      if (!(grid[i] > grid[i - 1])) throw InvalidArgument("verify_optimal_temperature: grid must be increasing");
      out.grid_step = std::max(out.grid_step, grid[i] - grid[i - 1]);
    }
    const double g = genbound_g(consts.C1_prime, consts.C2_prime, grid[i]);
    if (g < best) {
      best = g;
      out.grid_argmin = grid[i];
    }
  }
  out.g_at_Tstar = genbound_g(consts.C1_prime, consts.C2_prime, out.T_star);
  out.closed_form_residual =
      std::abs(out.g_at_Tstar + consts.C1_prime * consts.C1_prime / (4.0 * consts.C2_prime));
  // A relative slack of a few ulps absorbs the rounding of the grid points themselves.
  out.argmin_near_Tstar = std::abs(out.grid_argmin - out.T_star) <= out.grid_step * (1.0 + 1e-9);
  out.better_than_infinite = out.g_at_Tstar < 0.0;
  return out;
}

}  // namespace aoe

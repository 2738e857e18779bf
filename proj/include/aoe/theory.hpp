#pragma once

// Closed-form margin dynamics and generalisation-bound constants, each paired
// with a direct numerical check.

#include <optional>
#include <span>
#include <vector>

#include "aoe/numkernel.hpp"

namespace aoe {

// m = z_a - z_b for the top index a and runner-up b (ties to the lowest
// index), and R = sum_{k != a, b} exp(z_k - z_b).
struct MarginReport {
  double m = 0.0;
  std::size_t a = 0;
  std::size_t b = 0;
  double R = 0.0;
};

MarginReport logit_margin(std::span<const double> z);

// R(z, b) evaluated on z / T with the indices of z.
double runner_up_mass(std::span<const double> z, std::size_t a, std::size_t b, double T = 1.0);

// (e^x - 1) / (e^x + 1 + R).
double h_func(double x, double R);

// eta [h(m, R(z, b)) - h(m / T, R(z / T, b))], evaluated without the
// cancellation of forming m - m+.
double margin_contraction(std::span<const double> z, double T, double eta);
// m - margin_contraction(z, T, eta).
double predicted_margin_after_step(std::span<const double> z, double T, double eta);

struct Thm2Check {
  double explicit_margin = 0.0;   // z+_a - z+_b with a, b frozen from z
  double predicted_margin = 0.0;
  double residual = 0.0;
  bool argmax_changed = false;    // top-2 order of z+ differs from z
};

// One explicit step z+ = z - eta (p - q_T) compared with the closed form.
Thm2Check verify_thm2(std::span<const double> z, double T, double eta);

struct PairGap {
  std::size_t i = 0;
  std::size_t j = 0;
  double before = 0.0;
  double after = 0.0;
  bool contracted = false;  // after <= before + 1e-12
};

// One step z+ = z - eta (p - U). Throws PreconditionViolated unless
// eta <= (smallest non-zero pairwise gap) / 2.
std::vector<PairGap> verify_prop1(std::span<const double> z, double eta);

struct ContractionPoint {
  double T = 0.0;
  double delta_m = 0.0;
};

struct ContractionCurve {
  std::vector<ContractionPoint> points;
  double delta_m_infinity = 0.0;  // eta h(m, R(z, b))
  bool strictly_ordered = false;  // 0 < dm_T < dm_inf at every grid point
  bool monotone_in_T = false;     // dm_T non-decreasing along an increasing grid
};

ContractionCurve contraction_curve(std::span<const double> z, double eta, std::span<const double> T_grid);

struct MspBounds {
  double lower = 0.0;
  double msp = 0.0;
  double upper = 0.0;
  bool holds(double slack = 1e-12) const noexcept { return lower <= msp + slack && msp <= upper + slack; }
};

// 1 / (1 + (K-1) e^{-m}) <= max softmax <= 1 / (1 + e^{-m}).
MspBounds msp_margin_bounds(std::span<const double> z);

struct GenBoundConstants {
  double C1_prime = 0.0;
  double C2_prime = 0.0;
  std::vector<double> mu_x;   // per-row logit mean
  std::vector<double> var_f;  // per-row logit variance (population)
  std::optional<double> T_star;      // 2 C2' / C1', only when C1' > 0
  std::optional<double> g_at_Tstar;  // -(C1')^2 / (4 C2'), only when T* is defined and C2' > 0
};

GenBoundConstants genbound_constants(const Matrix& logit_batch);
// Constants supplied directly, without a batch.
GenBoundConstants genbound_constants(double C1_prime, double C2_prime);

// g(T) = -C1'/T + C2'/T^2.
double genbound_g(double C1_prime, double C2_prime, double T);

struct OptimalTemperatureCheck {
  double grid_argmin = 0.0;
  double grid_step = 0.0;  // largest spacing between neighbouring grid points
  double T_star = 0.0;
  double g_at_Tstar = 0.0;
  double closed_form_residual = 0.0;  // |g(T*) + C1'^2 / (4 C2')|
  bool argmin_near_Tstar = false;     // |argmin - T*| <= grid_step
  bool better_than_infinite = false;  // g(T*) < 0 = lim g
  bool ok() const noexcept { return argmin_near_Tstar && better_than_infinite; }
};

// Grid search of g over `grid` (increasing). Throws InvalidArgument unless
// C1' > 0, C2' > 0 and the grid has at least two points.
OptimalTemperatureCheck verify_optimal_temperature(const GenBoundConstants& consts, std::span<const double> grid);

}  // namespace aoe

#include "aoe/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "aoe/error.hpp"

namespace aoe {

namespace {

// Per-row quantities shared by the OOD terms. Logs come from log-softmax so
// they stay finite even when a probability underflows to zero.
struct RowCache {
  std::vector<double> p, logp, q, logq;

  void fill(std::span<const double> z, double T) {
    const std::size_t k = z.size();
    p.resize(k), logp.resize(k), q.resize(k), logq.resize(k);
    log_softmax(z, 1.0, p, logp);
    log_softmax(z, T, q, logq);
  }

  static void log_softmax(std::span<const double> z, double T, std::vector<double>& prob, std::vector<double>& logs) {
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      logs[i] = (z[i] - zmax) / T;
      prob[i] = std::exp(logs[i]);
      sum += prob[i];
    }
    const double log_sum = std::log(sum);
    for (std::size_t i = 0; i < z.size(); ++i) {
      logs[i] -= log_sum;
      prob[i] /= sum;
    }
  }
};

void check_logits(const Matrix& m, const char* what) {
  if (m.cols() < 2) throw InvalidArgument(std::string(what) + ": need at least 2 classes");
  if (!m.all_finite()) throw InvalidArgument(std::string(what) + ": non-finite logits");
}

void check_labels(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) throw InvalidArgument("loss: label count does not match logit rows");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
      throw InvalidArgument("loss: label " + std::to_string(y) + " is not a valid class index");
    }
  }
}

struct OodTerms {
  double term_a = 0.0;
  double term_b = 0.0;
  Matrix d_z;  // alpha applied
  double d_T = 0.0;
};

// Term A / term B values, theta-gradients and T-derivative on the OOD rows.
OodTerms aoe_ood_terms(const Matrix& z_all, double T, double alpha, AoeMode mode, const AoeOptions& opts) {
  if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("loss_aoe: temperature must be positive");
  const std::size_t n = z_all.rows(), k = z_all.cols();
  const double inv_k = 1.0 / static_cast<double>(k);
  const double log_k = std::log(static_cast<double>(k));
  const bool joint = mode == AoeMode::joint;

  OodTerms out;
  out.d_z = Matrix(n, k);
  if (n == 0) return out;

  RowCache c;
  std::vector<double> dq(k);
  double sum_a = 0.0, sum_b = 0.0, sum_da = 0.0, sum_db = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto z = z_all.row(r);
    c.fill(z, T);

    double zbar_q = 0.0, zbar_u = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      zbar_q += c.q[i] * z[i];
      zbar_u += z[i];
    }
    zbar_u *= inv_k;
    // dq_i/dT = -q_i (z_i - E_q[z]) / T^2
    for (std::size_t i = 0; i < k; ++i) dq[i] = -c.q[i] * (z[i] - zbar_q) / (T * T);

    // Term B = KL(q || p) and its T-derivative (the +1 from d(q log q) sums to 0).
    double b = 0.0, db = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double d = c.logq[i] - c.logp[i];
      b += c.q[i] * d;
      db += dq[i] * d;
    }

    double a = 0.0, da = 0.0, neg_h = 0.0;
    if (opts.term_a_direction == KlDirection::uniform_first) {
      double mean_logq = 0.0;
      for (double lq : c.logq) mean_logq += lq;
      mean_logq *= inv_k;
      a = -log_k - mean_logq;
      da = (zbar_u - zbar_q) / (T * T);
    } else {
      for (std::size_t i = 0; i < k; ++i) {
        neg_h += c.q[i] * c.logq[i];
        da += dq[i] * c.logq[i];
      }
      a = neg_h + log_k;
    }
    sum_a += std::max(a, 0.0);
    sum_b += std::max(b, 0.0);
    sum_da += da;
    sum_db += db;

    auto g = out.d_z.row(r);
    for (std::size_t i = 0; i < k; ++i) {
      // Term B: p - q with q detached; the q-path adds (q_i / T)(d_i - B).
      double gi = c.p[i] - c.q[i];
      if (!opts.stop_gradient_target) gi += c.q[i] / T * ((c.logq[i] - c.logp[i]) - b);
      if (joint) {
        if (opts.term_a_direction == KlDirection::uniform_first) {
          gi += (c.q[i] - inv_k) / T;
        } else {
          gi += c.q[i] / T * (c.logq[i] - neg_h);
        }
      }
      g[i] = alpha * gi;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.term_a = sum_a * inv_n;
  out.term_b = sum_b * inv_n;
  out.d_T = joint ? alpha * (sum_da + sum_db) * inv_n : sum_da * inv_n;
  return out;
}

Matrix logits_for(const MlpParams& params, const Matrix& x) { return forward(params, x); }

GradientBundle theta_gradient(const MlpParams& params, const LabeledBatch& id_batch, const Matrix& ood_x,
                              const LossGradients& g) {
  auto grads = backward(params, id_batch.features, g.d_id);
  if (ood_x.rows() > 0) grads += backward(params, ood_x, g.d_ood);
  return grads;
}

}  // namespace

void TemperatureState::validate() const {
  if (!(t_min > 0.0) || !(t_max >= t_min) || !std::isfinite(t_max)) {
    throw InvalidArgument("TemperatureState: need 0 < t_min <= t_max");
  }
  if (!(T >= t_min && T <= t_max)) throw InvalidArgument("TemperatureState: T outside [t_min, t_max]");
  if (!(lr_T >= 0.0) || !std::isfinite(lr_T)) throw InvalidArgument("TemperatureState: lr_T must be >= 0");
}

void TemperatureState::clamp() noexcept { T = std::clamp(T, t_min, t_max); }

void AlphaSchedule::validate() const {
  if (kind == AlphaKind::fixed && !(c >= 0.0)) throw InvalidArgument("AlphaSchedule: fixed c must be >= 0");
  if (horizon < 1) throw InvalidArgument("AlphaSchedule: horizon must be >= 1");
}

double alpha_at(const AlphaSchedule& schedule, std::size_t epoch) {
  schedule.validate();
  const double t = static_cast<double>(epoch);
  const double h = static_cast<double>(schedule.horizon);
  switch (schedule.kind) {
    case AlphaKind::fixed: return schedule.c;
    case AlphaKind::exponential: return 1.0 - std::exp(-t / 35.0);
    case AlphaKind::cosine: return 0.5 - std::cos((t + 1.0) * std::numbers::pi / h) / 2.0;
    case AlphaKind::linear: return std::min(1.0, (t + 1.0) / h);
  }
  throw InvalidArgument("alpha_at: unknown schedule kind");
}

AlphaKind parse_alpha_kind(std::string_view name) {
  if (name == "fixed") return AlphaKind::fixed;
  if (name == "exponential") return AlphaKind::exponential;
  if (name == "cosine") return AlphaKind::cosine;
  if (name == "linear") return AlphaKind::linear;
  throw InvalidArgument("unknown alpha schedule '" + std::string(name) + "'");
}

std::string_view to_string(AlphaKind kind) {
  switch (kind) {
    case AlphaKind::fixed: return "fixed";
    case AlphaKind::exponential: return "exponential";
    case AlphaKind::cosine: return "cosine";
    case AlphaKind::linear: return "linear";
  }
  return "?";
}

AoeMode parse_aoe_mode(std::string_view name) {
  if (name == "joint") return AoeMode::joint;
  if (name == "alternating") return AoeMode::alternating;
  throw InvalidArgument("unknown AOE mode '" + std::string(name) + "'");
}

KlDirection parse_kl_direction(std::string_view name) {
  if (name == "uniform_first") return KlDirection::uniform_first;
  if (name == "target_first") return KlDirection::target_first;
  throw InvalidArgument("unknown KL direction '" + std::string(name) + "'");
}

std::string_view to_string(KlDirection dir) {
  return dir == KlDirection::uniform_first ? "uniform_first" : "target_first";
}

LossGradients loss_ce(const Matrix& id_logits, std::span<const int> id_labels) {
  check_logits(id_logits, "loss_ce");
  check_labels(id_logits, id_labels);
  const std::size_t n = id_logits.rows(), k = id_logits.cols();
  LossGradients out;
  out.d_id = Matrix(n, k);
  std::vector<double> p(k), logp(k);
  double sum = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    RowCache::log_softmax(id_logits.row(r), 1.0, p, logp);
    const auto y = static_cast<std::size_t>(id_labels[r]);
    sum -= logp[y];
    auto g = out.d_id.row(r);
    for (std::size_t i = 0; i < k; ++i) g[i] = p[i] - (i == y ? 1.0 : 0.0);
  }
  out.loss.ce_id = n ? sum / static_cast<double>(n) : 0.0;
  out.loss.total = out.loss.ce_id;
  return out;
}

LossGradients loss_oe(const Matrix& id_logits, std::span<const int> id_labels, const Matrix& ood_logits,
                      double alpha) {
  auto out = loss_ce(id_logits, id_labels);
  check_logits(ood_logits, "loss_oe");
  if (ood_logits.cols() != id_logits.cols()) throw InvalidArgument("loss_oe: ID/OOD class count mismatch");
  if (!(alpha >= 0.0)) throw InvalidArgument("loss_oe: alpha must be >= 0");
  const std::size_t n = ood_logits.rows(), k = ood_logits.cols();
  const double inv_k = 1.0 / static_cast<double>(k);
  const double log_k = std::log(static_cast<double>(k));
  out.d_ood = Matrix(n, k);
  std::vector<double> p(k), logp(k);
  double sum = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    RowCache::log_softmax(ood_logits.row(r), 1.0, p, logp);
    double mean_logp = 0.0;
    for (double v : logp) mean_logp += v;
    sum += std::max(-log_k - mean_logp * inv_k, 0.0);
    auto g = out.d_ood.row(r);
    for (std::size_t i = 0; i < k; ++i) g[i] = alpha * (p[i] - inv_k);
  }
  out.loss.align_T_to_uniform = n ? sum / static_cast<double>(n) : 0.0;
  out.loss.alpha_used = alpha;
  out.loss.total = out.loss.ce_id + alpha * out.loss.align_T_to_uniform;
  return out;
}

std::vector<ProbVector> soft_target(const Matrix& ood_logits, double T) {
  std::vector<ProbVector> out;
  out.reserve(ood_logits.rows());
  for (std::size_t r = 0; r < ood_logits.rows(); ++r) out.push_back(softmax(ood_logits.row(r), T));
  return out;
}

LossGradients loss_aoe(const Matrix& id_logits, std::span<const int> id_labels, const Matrix& ood_logits,
                       const TemperatureState& temp, double alpha, AoeMode mode, const AoeOptions& opts) {
  auto out = loss_ce(id_logits, id_labels);
  check_logits(ood_logits, "loss_aoe");
  if (ood_logits.cols() != id_logits.cols()) throw InvalidArgument("loss_aoe: ID/OOD class count mismatch");
  if (!(alpha >= 0.0)) throw InvalidArgument("loss_aoe: alpha must be >= 0");
  auto terms = aoe_ood_terms(ood_logits, temp.T, alpha, mode, opts);
  out.d_ood = std::move(terms.d_z);
  out.d_T = terms.d_T;
  out.loss.align_T_to_uniform = terms.term_a;
  out.loss.align_pred_to_target = terms.term_b;
  out.loss.alpha_used = alpha;
  out.loss.total = mode == AoeMode::joint ? out.loss.ce_id + alpha * (terms.term_a + terms.term_b)
                                          : out.loss.ce_id + alpha * terms.term_b;
  return out;
}

LossGradients loss_aoe_kplus1(const Matrix& ood_logits_kplus1, const TemperatureState& temp, double alpha,
                              AoeMode mode, const AoeOptions& opts) {
  if (ood_logits_kplus1.cols() < 3) throw InvalidArgument("loss_aoe_kplus1: need at least 2 ID columns plus one");
  if (!ood_logits_kplus1.all_finite()) throw InvalidArgument("loss_aoe_kplus1: non-finite logits");
  const std::size_t k = ood_logits_kplus1.cols() - 1;
  auto terms = aoe_ood_terms(ood_logits_kplus1.leading_cols(k), temp.T, alpha, mode, opts);
  LossGradients out;
  out.d_ood = Matrix(ood_logits_kplus1.rows(), k + 1);
  for (std::size_t r = 0; r < out.d_ood.rows(); ++r) {
    std::copy_n(terms.d_z.row(r).begin(), k, out.d_ood.row(r).begin());
  }
  out.d_T = terms.d_T;
  out.loss.align_T_to_uniform = terms.term_a;
  out.loss.align_pred_to_target = terms.term_b;
  out.loss.alpha_used = alpha;
  out.loss.total = mode == AoeMode::joint ? alpha * (terms.term_a + terms.term_b) : alpha * terms.term_b;
  return out;
}

LossBreakdown ce_step(MlpParams& params, OptimizerState& opt, const LabeledBatch& id_batch) {
  const auto g = loss_ce(logits_for(params, id_batch.features), id_batch.labels);
  sgd_step(params, opt, backward(params, id_batch.features, g.d_id));
  return g.loss;
}

LossBreakdown oe_step(MlpParams& params, OptimizerState& opt, const LabeledBatch& id_batch, const Matrix& ood_x,
                      double alpha) {
  const auto g = loss_oe(logits_for(params, id_batch.features), id_batch.labels, logits_for(params, ood_x), alpha);
  sgd_step(params, opt, theta_gradient(params, id_batch, ood_x, g));
  return g.loss;
}

LossBreakdown joint_step(MlpParams& params, OptimizerState& opt, TemperatureState& temp,
                         const LabeledBatch& id_batch, const Matrix& ood_x, double alpha, const AoeOptions& opts) {
  if (!temp.learnable) throw InvalidArgument("joint_step: temperature is not learnable");
  const auto g = loss_aoe(logits_for(params, id_batch.features), id_batch.labels, logits_for(params, ood_x), temp,
                          alpha, AoeMode::joint, opts);
  // Both gradients are taken at (theta_t, T_t) before either variable moves.
  sgd_step(params, opt, theta_gradient(params, id_batch, ood_x, g));
  temp.T -= temp.lr_T * g.d_T;
  temp.clamp();
  return g.loss;
}

LossBreakdown alternating_step(MlpParams& params, OptimizerState& opt, TemperatureState& temp,
                               const LabeledBatch& id_batch, const Matrix& ood_x, double alpha,
                               const AoeOptions& opts, std::size_t t_updates) {
  if (!temp.learnable) throw InvalidArgument("alternating_step: temperature is not learnable");
  const Matrix ood_logits = logits_for(params, ood_x);
  if (ood_logits.rows() > 0) {
    for (std::size_t i = 0; i < t_updates; ++i) {
      const auto terms = aoe_ood_terms(ood_logits, temp.T, alpha, AoeMode::alternating, opts);
      temp.T -= temp.lr_T * terms.d_T;
      temp.clamp();
    }
  }
  const auto g = loss_aoe(logits_for(params, id_batch.features), id_batch.labels, ood_logits, temp, alpha,
                          AoeMode::alternating, opts);
  sgd_step(params, opt, theta_gradient(params, id_batch, ood_x, g));
  return g.loss;
}

LossBreakdown fixed_temperature_step(MlpParams& params, OptimizerState& opt, const TemperatureState& temp,
                                     const LabeledBatch& id_batch, const Matrix& ood_x, double alpha,
                                     const AoeOptions& opts) {
  const auto g = loss_aoe(logits_for(params, id_batch.features), id_batch.labels, logits_for(params, ood_x), temp,
                          alpha, AoeMode::alternating, opts);
  sgd_step(params, opt, theta_gradient(params, id_batch, ood_x, g));
  return g.loss;
}

}  // namespace aoe

#pragma once

// Training objectives: the uniform-target OE baseline, the adaptive
// temperature objective (joint and alternating), alpha schedules and the K+1
// variant. Every loss returns per-row upstream gradients dL/dz suitable for
// model::backward (which averages rows) plus, where relevant, dL/dT.

#include <span>
#include <string_view>
#include <vector>

#include "aoe/model.hpp"
#include "aoe/numkernel.hpp"
#include "aoe/synthdata.hpp"

namespace aoe {

struct TemperatureState {
  double T = 1.5;
  double t_min = 1.0;
  double t_max = 10.0;
  double lr_T = 10.0;
  bool learnable = true;

  void validate() const;
  // Hard projection onto [t_min, t_max].
  void clamp() noexcept;
};

enum class AlphaKind { fixed, exponential, cosine, linear };

struct AlphaSchedule {
  AlphaKind kind = AlphaKind::cosine;
  double c = 0.5;  // used by `fixed`
  std::size_t horizon = 100;

  void validate() const;
};

// fixed: c; exponential: 1 - exp(-t/35); cosine: 0.5 - cos((t+1) pi / H) / 2;
// linear: min(1, (t+1) / H), with H = horizon.
double alpha_at(const AlphaSchedule& schedule, std::size_t epoch);
AlphaKind parse_alpha_kind(std::string_view name);
std::string_view to_string(AlphaKind kind);

struct LossBreakdown {
  double ce_id = 0.0;
  double align_T_to_uniform = 0.0;    // term A
  double align_pred_to_target = 0.0;  // term B
  double total = 0.0;
  double alpha_used = 0.0;
};

enum class AoeMode { joint, alternating };

// Argument order of the temperature-to-uniform term: KL(U || q_T) or KL(q_T || U).
enum class KlDirection { uniform_first, target_first };

AoeMode parse_aoe_mode(std::string_view name);
KlDirection parse_kl_direction(std::string_view name);
std::string_view to_string(KlDirection dir);

struct AoeOptions {
  KlDirection term_a_direction = KlDirection::uniform_first;
  // Treat q_T as a constant target in the theta-gradient of term B.
  bool stop_gradient_target = true;
};

struct LossGradients {
  LossBreakdown loss;
  Matrix d_id;   // per-row dL/dz for ID rows (mean over rows is taken by backward)
  Matrix d_ood;  // per-row dL/dz for OOD rows, alpha already applied
  double d_T = 0.0;
};

// Mean cross-entropy against integer labels; d_id rows are p - onehot.
LossGradients loss_ce(const Matrix& id_logits, std::span<const int> id_labels);

// Mean CE on ID rows + alpha * mean KL(U || s(z_o)). OOD rows get alpha (p - U).
// The OOD term is reported in align_T_to_uniform.
LossGradients loss_oe(const Matrix& id_logits, std::span<const int> id_labels, const Matrix& ood_logits,
                      double alpha);

// q_T = s(z / T) for each row.
std::vector<ProbVector> soft_target(const Matrix& ood_logits, double T);

// Term A = mean KL(U || q_T) (or reversed), term B = mean KL(q_T || p).
// joint:       total = CE + alpha (A + B); theta-grad of both terms; dL/dT = alpha d(A + B)/dT.
// alternating: total = CE + alpha B;       theta-grad of B only;     dL/dT = dA/dT.
LossGradients loss_aoe(const Matrix& id_logits, std::span<const int> id_labels, const Matrix& ood_logits,
                       const TemperatureState& temp, double alpha, AoeMode mode, const AoeOptions& opts = {});

// The OOD terms of loss_aoe evaluated on the first K columns of K+1-column
// logits. The extra column gets zero gradient. ce_id is 0 and d_id is empty.
LossGradients loss_aoe_kplus1(const Matrix& ood_logits_kplus1, const TemperatureState& temp, double alpha,
                              AoeMode mode, const AoeOptions& opts = {});

// One optimisation step per call. Each mutates params/opt/temp in place and
// returns the loss evaluated at the point the theta-gradient was taken.
LossBreakdown ce_step(MlpParams& params, OptimizerState& opt, const LabeledBatch& id_batch);
LossBreakdown oe_step(MlpParams& params, OptimizerState& opt, const LabeledBatch& id_batch, const Matrix& ood_x,
                      double alpha);
LossBreakdown joint_step(MlpParams& params, OptimizerState& opt, TemperatureState& temp,
                         const LabeledBatch& id_batch, const Matrix& ood_x, double alpha,
                         const AoeOptions& opts = {});
// `t_updates` temperature steps on term A (each followed by the clamp), then
// one theta step with the fresh T held constant.
LossBreakdown alternating_step(MlpParams& params, OptimizerState& opt, TemperatureState& temp,
                               const LabeledBatch& id_batch, const Matrix& ood_x, double alpha,
                               const AoeOptions& opts = {}, std::size_t t_updates = 1);
// Self-distillation towards s(z / T) at the current, never-updated T.
LossBreakdown fixed_temperature_step(MlpParams& params, OptimizerState& opt, const TemperatureState& temp,
                                     const LabeledBatch& id_batch, const Matrix& ood_x, double alpha,
                                     const AoeOptions& opts = {});

}  // namespace aoe

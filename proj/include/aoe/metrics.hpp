#pragma once

#include <span>
#include <vector>

#include "aoe/detection.hpp"
#include "aoe/model.hpp"
#include "aoe/numkernel.hpp"
#include "aoe/synthdata.hpp"

namespace aoe {

// Logit-margin statistics of an evaluation split: mu_i, mu_o and nu_o^2 are
// the mean ID margin, mean OOD margin and OOD margin variance; the last field
// is the fraction of ID rows whose label logit is not the strict maximum.
struct MarginStats {
  double mu_id = 0.0;
  double mu_ood = 0.0;
  double nu_ood_sq = 0.0;
  double frac_id_negative_margin = 0.0;
};

struct EvalReport {
  double fpr95 = 0.0;
  double auroc = 0.0;
  double id_acc = 0.0;
  double separation_margin = 0.0;
  double oversoftening_mean_margin = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  MarginStats margins;
};

double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double tpr_target = 0.95);
// P(id > ood) + P(id == ood) / 2 from midranks; exact for any ties.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);
// Argmax ties go to the lowest index.
double id_accuracy(const Matrix& logits, std::span<const int> labels);
double separation_margin(std::span<const double> id_scores, std::span<const double> ood_scores);
// Mean top-minus-runner-up logit gap over rows.
double oversoftening_mean_margin(const Matrix& ood_logits);

EvalReport evaluate_logits(const Matrix& id_logits, std::span<const int> id_labels, const Matrix& ood_logits,
                           const ScoreKind& kind, double tpr_target = 0.95);
EvalReport evaluate(const MlpParams& params, const LabeledBatch& id_test, const Matrix& ood_x,
                    const ScoreKind& kind, double tpr_target = 0.95);

}  // namespace aoe

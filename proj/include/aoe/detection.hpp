#pragma once

// OOD scores and the thresholded detector: ID iff score >= lambda.

#include <span>
#include <string_view>
#include <vector>

#include "aoe/numkernel.hpp"

namespace aoe {

struct ScoreKind {
  enum class Kind { msp, energy };
  Kind kind = Kind::msp;
  double energy_temperature = 1.0;

  static ScoreKind msp() { return {}; }
  static ScoreKind energy(double temperature = 1.0);

  void validate() const;
  friend bool operator==(const ScoreKind&, const ScoreKind&) = default;
};

ScoreKind parse_score_kind(std::string_view name, double energy_temperature = 1.0);
std::string_view to_string(const ScoreKind& kind);

enum class Verdict { id, ood };

struct Detector {
  ScoreKind kind;
  double lambda = 0.0;
};

// max_k softmax(z)_k.
double msp_score(std::span<const double> logits);
// T_e * log sum_k exp(z_k / T_e); larger means more ID-like.
double energy_score(std::span<const double> logits, double temperature = 1.0);
double score(const ScoreKind& kind, std::span<const double> logits);
std::vector<double> score_rows(const ScoreKind& kind, const Matrix& logits);

// The ceil(tpr_target * N)-th largest ID score: the largest lambda such that at
// least that many ID scores satisfy score >= lambda.
double calibrate_threshold(std::span<const double> id_scores, double tpr_target = 0.95);

Verdict classify(const Detector& det, std::span<const double> logits);

}  // namespace aoe

#include "aoe/detection.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "aoe/error.hpp"

namespace aoe {

ScoreKind ScoreKind::energy(double temperature) {
  ScoreKind k{Kind::energy, temperature};
  k.validate();
  return k;
}

void ScoreKind::validate() const {
  if (kind == Kind::energy && (!(energy_temperature > 0.0) || !std::isfinite(energy_temperature))) {
    throw InvalidArgument("ScoreKind: energy temperature must be positive");
  }
}

ScoreKind parse_score_kind(std::string_view name, double energy_temperature) {
  if (name == "msp") return ScoreKind::msp();
  if (name == "energy") return ScoreKind::energy(energy_temperature);
  throw InvalidArgument("unknown score kind '" + std::string(name) + "'");
}

std::string_view to_string(const ScoreKind& kind) { return kind.kind == ScoreKind::Kind::msp ? "msp" : "energy"; }

double msp_score(std::span<const double> logits) {
  if (logits.size() < 2) throw InvalidArgument("msp_score: need at least 2 classes");
  const auto p = softmax(logits, 1.0);
  return *std::max_element(p.entries().begin(), p.entries().end());
}

double energy_score(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("energy_score: temperature must be positive");
  std::vector<double> scaled(logits.begin(), logits.end());
  for (double& v : scaled) v /= temperature;
  return temperature * log_sum_exp(scaled);
}

double score(const ScoreKind& kind, std::span<const double> logits) {
  return kind.kind == ScoreKind::Kind::msp ? msp_score(logits) : energy_score(logits, kind.energy_temperature);
}

std::vector<double> score_rows(const ScoreKind& kind, const Matrix& logits) {
  std::vector<double> out;
  out.reserve(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) out.push_back(score(kind, logits.row(r)));
  return out;
}

double calibrate_threshold(std::span<const double> id_scores, double tpr_target) {
  if (id_scores.empty()) throw InvalidArgument("calibrate_threshold: empty ID score list");
  if (!(tpr_target > 0.0 && tpr_target < 1.0)) throw InvalidArgument("calibrate_threshold: tpr_target must lie in (0, 1)");
  std::vector<double> sorted(id_scores.begin(), id_scores.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double n = static_cast<double>(sorted.size());
  // The small slack keeps products like 0.95 * 100 from rounding up a whole count.
  auto needed = static_cast<std::size_t>(std::ceil(tpr_target * n - 1e-9));
  needed = std::clamp<std::size_t>(needed, 1, sorted.size());
  return sorted[needed - 1];
}

Verdict classify(const Detector& det, std::span<const double> logits) {
  return score(det.kind, logits) >= det.lambda ? Verdict::id : Verdict::ood;
}

}  // namespace aoe

#include "aoe/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

#include "aoe/error.hpp"
#include "aoe/theory.hpp"

namespace aoe {

namespace {

void require_nonempty(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.empty() || b.empty()) throw InvalidArgument(std::string(what) + ": empty score list");
}

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

std::size_t argmax_lowest(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

}  // namespace

double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double tpr_target) {
  require_nonempty(id_scores, ood_scores, "fpr_at_tpr");
  const double lambda = calibrate_threshold(id_scores, tpr_target);
  const auto fp = std::count_if(ood_scores.begin(), ood_scores.end(), [&](double s) { return s >= lambda; });
  return static_cast<double>(fp) / static_cast<double>(ood_scores.size());
}

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require_nonempty(id_scores, ood_scores, "auroc");
  struct Entry {
    double score;
    bool is_id;
  };
  std::vector<Entry> all;
  all.reserve(id_scores.size() + ood_scores.size());
  for (double s : id_scores) all.push_back({s, true});
  for (double s : ood_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Entry& x, const Entry& y) { return x.score < y.score; });

  // Twice the ID rank sum, with tied groups sharing midrank (first + last) / 2.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const std::uint64_t twice_midrank = (i + 1) + j;
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].is_id) twice_rank_sum += twice_midrank;
    }
    i = j;
  }
  const std::uint64_t n = id_scores.size(), m = ood_scores.size();
  // 2U counts each strictly-greater pair twice and each tie once.
  const std::uint64_t twice_u = twice_rank_sum - n * (n + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n) * static_cast<double>(m));
}

double id_accuracy(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) throw InvalidArgument("id_accuracy: label count does not match rows");
  if (labels.empty()) throw InvalidArgument("id_accuracy: empty batch");
  std::size_t correct = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (labels[r] < 0) throw InvalidArgument("id_accuracy: OOD sentinel label in ID batch");
    if (argmax_lowest(logits.row(r)) == static_cast<std::size_t>(labels[r])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double separation_margin(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require_nonempty(id_scores, ood_scores, "separation_margin");
  return mean(id_scores) - mean(ood_scores);
}

double oversoftening_mean_margin(const Matrix& ood_logits) {
  if (ood_logits.rows() == 0) throw InvalidArgument("oversoftening_mean_margin: empty batch");
  double sum = 0.0;
  for (std::size_t r = 0; r < ood_logits.rows(); ++r) sum += logit_margin(ood_logits.row(r)).m;
  return sum / static_cast<double>(ood_logits.rows());
}

EvalReport evaluate_logits(const Matrix& id_logits, std::span<const int> id_labels, const Matrix& ood_logits,
                           const ScoreKind& kind, double tpr_target) {
  const auto id_scores = score_rows(kind, id_logits);
  const auto ood_scores = score_rows(kind, ood_logits);
  EvalReport rep;
  rep.fpr95 = fpr_at_tpr(id_scores, ood_scores, tpr_target);
  rep.auroc = auroc(id_scores, ood_scores);
  rep.id_acc = id_accuracy(id_logits, id_labels);
  rep.separation_margin = separation_margin(id_scores, ood_scores);
  rep.oversoftening_mean_margin = oversoftening_mean_margin(ood_logits);
  rep.n_id = id_logits.rows();
  rep.n_ood = ood_logits.rows();

  double id_sum = 0.0;
  std::size_t negative = 0;
  for (std::size_t r = 0; r < id_logits.rows(); ++r) {
    const auto row = id_logits.row(r);
    id_sum += logit_margin(row).m;
    const auto y = static_cast<std::size_t>(id_labels[r]);
    double best_other = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k != y) best_other = std::max(best_other, row[k]);
    }
    if (row[y] - best_other <= 0.0) ++negative;
  }
  std::vector<double> ood_margins;
  for (std::size_t r = 0; r < ood_logits.rows(); ++r) ood_margins.push_back(logit_margin(ood_logits.row(r)).m);
  const double mu_o = mean(ood_margins);
  double var = 0.0;
  for (double m : ood_margins) var += (m - mu_o) * (m - mu_o);
  rep.margins.mu_id = id_sum / static_cast<double>(id_logits.rows());
  rep.margins.mu_ood = mu_o;
  rep.margins.nu_ood_sq = var / static_cast<double>(ood_margins.size());
  rep.margins.frac_id_negative_margin = static_cast<double>(negative) / static_cast<double>(id_logits.rows());
  return rep;
}

EvalReport evaluate(const MlpParams& params, const LabeledBatch& id_test, const Matrix& ood_x, const ScoreKind& kind,
                    double tpr_target) {
  return evaluate_logits(forward(params, id_test.features), id_test.labels, forward(params, ood_x), kind, tpr_target);
}

}  // namespace aoe

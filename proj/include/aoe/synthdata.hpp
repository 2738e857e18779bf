#pragma once

// Deterministic 2-D synthetic data: Gaussian ID classes on a circle, auxiliary
// training outliers, near/far test OOD sets, and CSV persistence.

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "aoe/numkernel.hpp"

namespace aoe {

inline constexpr int kOodLabel = -1;
inline constexpr std::size_t kFeatureDim = 2;

enum class OutlierKind { annulus, shifted_clusters, distant_blob };
enum class TestOodKind { near, far };

OutlierKind parse_outlier_kind(std::string_view name);
std::string_view to_string(OutlierKind kind);
TestOodKind parse_test_ood_kind(std::string_view name);

// Seed-stream offsets: each generator family draws from its own stream.
inline constexpr std::uint64_t kTrainOutlierSeedOffset = 0;
inline constexpr std::uint64_t kTestOodSeedOffset = 1;
inline constexpr std::uint64_t kIdSeedOffset = 2;

struct DatasetSpec {
  std::size_t num_classes = 4;
  std::size_t per_class = 500;
  double class_radius = 4.0;
  double class_sigma = 0.7;
  OutlierKind outlier_kind = OutlierKind::annulus;
  std::size_t outlier_count = 2000;
  std::uint64_t seed = 0;

  // Throws InvalidArgument. class_sigma == 0 is accepted (degenerate point masses).
  void validate() const;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct LabeledBatch {
  Matrix features;  // N x d
  std::vector<int> labels;  // class index in [0, K) or kOodLabel

  std::size_t size() const noexcept { return labels.size(); }
  // Throws InvalidArgument when row count and label count disagree or a label
  // is neither kOodLabel nor in [0, num_classes).
  void validate(std::size_t num_classes) const;

  friend bool operator==(const LabeledBatch&, const LabeledBatch&) = default;
};

// Mean of class k: radius * (cos 2pi k/K, sin 2pi k/K).
std::vector<double> class_mean(const DatasetSpec& spec, std::size_t k);
// One blob centre per adjacent class pair (k, k+1 mod K), on the bisector
// direction at distance |midpoint| + class_radius.
std::vector<std::vector<double>> shifted_cluster_centers(const DatasetSpec& spec);
// The far blob centre: distance 5 * class_radius along the first bisector.
std::vector<double> distant_blob_center(const DatasetSpec& spec);

LabeledBatch gen_id_gaussians(const DatasetSpec& spec, SeededRng& rng);
LabeledBatch gen_train_outliers(const DatasetSpec& spec, SeededRng& rng);
LabeledBatch gen_test_ood(const DatasetSpec& spec, TestOodKind kind, SeededRng& rng);

// Same generators on their documented seed streams (spec.seed + offset).
LabeledBatch gen_id_gaussians(const DatasetSpec& spec);
LabeledBatch gen_train_outliers(const DatasetSpec& spec);
// near and far are both drawn from stream spec.seed + 1, near first.
struct TestOodSets {
  LabeledBatch near;
  LabeledBatch far;
};
TestOodSets gen_test_ood(const DatasetSpec& spec);

// Header "f0,f1,...,label"; label is an integer or the literal "ood".
LabeledBatch load_csv(const std::filesystem::path& path);
LabeledBatch parse_csv(std::string_view text);
void save_csv(const LabeledBatch& batch, const std::filesystem::path& path);
std::string to_csv(const LabeledBatch& batch);

}  // namespace aoe

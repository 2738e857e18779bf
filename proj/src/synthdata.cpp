#include "aoe/synthdata.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "aoe/error.hpp"
#include "aoe/textio.hpp"

namespace aoe {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

LabeledBatch make_ood_batch(std::size_t n) {
  return LabeledBatch{Matrix(n, kFeatureDim), std::vector<int>(n, kOodLabel)};
}

void fill_blob(LabeledBatch& batch, std::size_t row, std::span<const double> center, double sigma,
               SeededRng& rng) {
  batch.features(row, 0) = rng.normal(center[0], sigma);
  batch.features(row, 1) = rng.normal(center[1], sigma);
}

// Points cycle through the blob centres in order, so every blob receives
// either floor(n / B) or ceil(n / B) points.
LabeledBatch shifted_clusters(const DatasetSpec& spec, SeededRng& rng) {
  const auto centers = shifted_cluster_centers(spec);
  auto batch = make_ood_batch(spec.outlier_count);
  for (std::size_t i = 0; i < spec.outlier_count; ++i) {
    fill_blob(batch, i, centers[i % centers.size()], spec.class_sigma, rng);
  }
  return batch;
}

LabeledBatch distant_blob(const DatasetSpec& spec, SeededRng& rng) {
  const auto center = distant_blob_center(spec);
  auto batch = make_ood_batch(spec.outlier_count);
  for (std::size_t i = 0; i < spec.outlier_count; ++i) fill_blob(batch, i, center, spec.class_sigma, rng);
  return batch;
}

LabeledBatch annulus(const DatasetSpec& spec, SeededRng& rng) {
  auto batch = make_ood_batch(spec.outlier_count);
  for (std::size_t i = 0; i < spec.outlier_count; ++i) {
    const double r = rng.uniform(2.0 * spec.class_radius, 3.0 * spec.class_radius);
    const double theta = kTwoPi * rng.uniform();
    batch.features(i, 0) = r * std::cos(theta);
    batch.features(i, 1) = r * std::sin(theta);
  }
  return batch;
}

}  // namespace

OutlierKind parse_outlier_kind(std::string_view name) {
  if (name == "annulus") return OutlierKind::annulus;
  if (name == "shifted_clusters") return OutlierKind::shifted_clusters;
  if (name == "distant_blob") return OutlierKind::distant_blob;
  throw InvalidArgument("unknown outlier kind '" + std::string(name) + "'");
}

std::string_view to_string(OutlierKind kind) {
  switch (kind) {
    case OutlierKind::annulus: return "annulus";
    case OutlierKind::shifted_clusters: return "shifted_clusters";
    case OutlierKind::distant_blob: return "distant_blob";
  }
  throw InvalidArgument("unknown outlier kind");
}

TestOodKind parse_test_ood_kind(std::string_view name) {
  if (name == "near") return TestOodKind::near;
  if (name == "far") return TestOodKind::far;
  throw InvalidArgument("unknown test OOD kind '" + std::string(name) + "'");
}

void DatasetSpec::validate() const {
  if (num_classes < 2) throw InvalidArgument("DatasetSpec: num_classes must be >= 2");
  if (per_class < 1) throw InvalidArgument("DatasetSpec: per_class must be >= 1");
  if (!(class_radius > 0.0) || !std::isfinite(class_radius)) {
    throw InvalidArgument("DatasetSpec: class_radius must be positive");
  }
  if (!(class_sigma >= 0.0) || !std::isfinite(class_sigma)) {
    throw InvalidArgument("DatasetSpec: class_sigma must be non-negative");
  }
}

void LabeledBatch::validate(std::size_t num_classes) const {
  if (features.rows() != labels.size()) throw InvalidArgument("LabeledBatch: row/label count mismatch");
  for (int y : labels) {
    if (y != kOodLabel && (y < 0 || static_cast<std::size_t>(y) >= num_classes)) {
      throw InvalidArgument("LabeledBatch: label " + std::to_string(y) + " out of range");
    }
  }
}

std::vector<double> class_mean(const DatasetSpec& spec, std::size_t k) {
  const double angle = kTwoPi * static_cast<double>(k) / static_cast<double>(spec.num_classes);
  return {spec.class_radius * std::cos(angle), spec.class_radius * std::sin(angle)};
}

std::vector<std::vector<double>> shifted_cluster_centers(const DatasetSpec& spec) {
  spec.validate();
  const double k = static_cast<double>(spec.num_classes);
  // |midpoint of adjacent means| = R cos(pi / K); the bisector keeps the
  // direction well defined even for K = 2 where the midpoint is the origin.
  const double dist = spec.class_radius * std::cos(std::numbers::pi / k) + spec.class_radius;
  std::vector<std::vector<double>> centers;
  for (std::size_t i = 0; i < spec.num_classes; ++i) {
    const double angle = kTwoPi * (static_cast<double>(i) + 0.5) / k;
    centers.push_back({dist * std::cos(angle), dist * std::sin(angle)});
  }
  return centers;
}

std::vector<double> distant_blob_center(const DatasetSpec& spec) {
  const double angle = std::numbers::pi / static_cast<double>(spec.num_classes);
  const double dist = 5.0 * spec.class_radius;
  return {dist * std::cos(angle), dist * std::sin(angle)};
}

LabeledBatch gen_id_gaussians(const DatasetSpec& spec, SeededRng& rng) {
  spec.validate();
  const std::size_t n = spec.num_classes * spec.per_class;
  LabeledBatch batch{Matrix(n, kFeatureDim), std::vector<int>(n)};
  std::size_t row = 0;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    const auto mean = class_mean(spec, k);
    for (std::size_t i = 0; i < spec.per_class; ++i, ++row) {
      fill_blob(batch, row, mean, spec.class_sigma, rng);
      batch.labels[row] = static_cast<int>(k);
    }
  }
  return batch;
}

LabeledBatch gen_train_outliers(const DatasetSpec& spec, SeededRng& rng) {
  spec.validate();
  switch (spec.outlier_kind) {
    case OutlierKind::annulus: return annulus(spec, rng);
    case OutlierKind::shifted_clusters: return shifted_clusters(spec, rng);
    case OutlierKind::distant_blob: return distant_blob(spec, rng);
  }
  throw InvalidArgument("gen_train_outliers: unknown outlier kind");
}

LabeledBatch gen_test_ood(const DatasetSpec& spec, TestOodKind kind, SeededRng& rng) {
  spec.validate();
  switch (kind) {
    case TestOodKind::near: return shifted_clusters(spec, rng);
    case TestOodKind::far: return distant_blob(spec, rng);
  }
  throw InvalidArgument("gen_test_ood: unknown kind");
}

LabeledBatch gen_id_gaussians(const DatasetSpec& spec) {
  SeededRng rng(spec.seed + kIdSeedOffset);
  return gen_id_gaussians(spec, rng);
}

LabeledBatch gen_train_outliers(const DatasetSpec& spec) {
  SeededRng rng(spec.seed + kTrainOutlierSeedOffset);
  return gen_train_outliers(spec, rng);
}

TestOodSets gen_test_ood(const DatasetSpec& spec) {
  SeededRng rng(spec.seed + kTestOodSeedOffset);
  auto near = gen_test_ood(spec, TestOodKind::near, rng);
  auto far = gen_test_ood(spec, TestOodKind::far, rng);
  return {std::move(near), std::move(far)};
}

// ---------------------------------------------------------------------------
// CSV

std::string to_csv(const LabeledBatch& batch) {
  if (batch.features.rows() != batch.labels.size()) throw InvalidArgument("to_csv: row/label count mismatch");
  std::string out;
  const std::size_t d = batch.features.cols();
  for (std::size_t j = 0; j < d; ++j) out += "f" + std::to_string(j) + ",";
  out += "label\n";
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (double v : batch.features.row(i)) {
      out += format_double(v);
      out += ',';
    }
    out += batch.labels[i] == kOodLabel ? std::string("ood") : std::to_string(batch.labels[i]);
    out += '\n';
  }
  return out;
}

void save_csv(const LabeledBatch& batch, const std::filesystem::path& path) {
  const auto text = to_csv(batch);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("save_csv: cannot open " + path.string());
  os << text;
  if (!os) throw InvalidArgument("save_csv: write failed for " + path.string());
}

LabeledBatch parse_csv(std::string_view text) {
  const auto lines = split(text, '\n');
  if (lines.empty() || trim(lines[0]).empty()) throw ParseError("missing header", 1);

  const auto header = split(trim(lines[0]), ',');
  const std::size_t d = header.size() - 1;
  if (header.size() < 2 || trim(header.back()) != "label") {
    throw ParseError("header must be f0,...,f{d-1},label", 1);
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (trim(header[j]) != "f" + std::to_string(j)) throw ParseError("header column " + std::to_string(j) + " must be f" + std::to_string(j), 1);
  }

  std::vector<double> data;
  std::vector<int> labels;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto line = trim(lines[ln]);
    if (line.empty()) continue;
    const std::size_t line_no = ln + 1;
    const auto fields = split(line, ',');
    if (fields.size() != d + 1) {
      throw SchemaError("expected " + std::to_string(d) + " features, found " + std::to_string(fields.size() - 1),
                        line_no);
    }
    for (std::size_t j = 0; j < d; ++j) {
      const auto v = parse_double(fields[j]);
      if (!v || !std::isfinite(*v)) throw ParseError("malformed feature value '" + std::string(fields[j]) + "'", line_no);
      data.push_back(*v);
    }
    const auto label = trim(fields[d]);
    if (label == "ood") {
      labels.push_back(kOodLabel);
    } else {
      const auto y = parse_int(label);
      if (!y || *y < 0 || *y > std::numeric_limits<int>::max()) {
        throw ParseError("malformed label '" + std::string(label) + "'", line_no);
      }
      labels.push_back(static_cast<int>(*y));
    }
  }
  return LabeledBatch{Matrix(labels.size(), d, std::move(data)), std::move(labels)};
}

LabeledBatch load_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("load_csv: cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_csv(ss.str());
}

}  // namespace aoe

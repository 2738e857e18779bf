#include "aoe/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "aoe/error.hpp"
#include "aoe/textio.hpp"
#include "aoe/theory.hpp"

namespace aoe {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Methods and configuration

Method parse_method(std::string_view name) {
  if (name == "ce_only") return Method::ce_only;
  if (name == "oe") return Method::oe;
  if (name == "aoe_joint") return Method::aoe_joint;
  if (name == "aoe_alternating") return Method::aoe_alternating;
  if (name == "fixed_T") return Method::fixed_T;
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::ce_only: return "ce_only";
    case Method::oe: return "oe";
    case Method::aoe_joint: return "aoe_joint";
    case Method::aoe_alternating: return "aoe_alternating";
    case Method::fixed_T: return "fixed_T";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  dataset.validate();
  if (dataset.outlier_count < 1) throw InvalidArgument("config: outlier_count must be >= 1 for training and evaluation");
  if (epochs < 1) throw InvalidArgument("config: epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("config: batch_size must be >= 1");
  if (seeds.empty()) throw InvalidArgument("config: seeds must be non-empty");
  for (auto h : hidden) {
    if (h == 0) throw InvalidArgument("config: hidden widths must be positive");
  }
  if (!(lr_base >= 0.0)) throw InvalidArgument("config: lr_base must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("config: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("config: weight_decay must be >= 0");
  if (method == Method::fixed_T && !(fixed_T >= 1.0 && fixed_T <= 10.0)) {
    throw InvalidArgument("config: fixed_T must lie in [1.0, 10]");
  }
  if (t_updates_per_step < 1) throw InvalidArgument("config: updates_per_step must be >= 1");
  alpha_schedule.validate();
  score.validate();
  TemperatureState{method == Method::fixed_T ? fixed_T : temp_init, t_min, t_max, eta_T, true}.validate();
  if (!(tpr_target > 0.0 && tpr_target < 1.0)) throw InvalidArgument("config: tpr_target must lie in (0, 1)");
}

std::vector<std::size_t> ExperimentConfig::arch_dims() const {
  std::vector<std::size_t> dims{kFeatureDim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(dataset.num_classes);
  return dims;
}

std::string ExperimentConfig::display_label() const {
  if (!label.empty()) return label;
  if (method == Method::fixed_T) return "fixed_T=" + format_double(fixed_T);
  return std::string(to_string(method));
}

namespace {

struct Entry {
  std::string value;
  std::size_t line;
};
using SectionMap = std::map<std::string, std::map<std::string, Entry>>;

SectionMap parse_sections(std::string_view text) {
  SectionMap out;
  std::string section;
  const auto lines = split(text, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = lines[i];
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", i + 1);
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ParseError("empty section name", i + 1);
      out[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value", i + 1);
    if (section.empty()) throw ParseError("key outside of any section", i + 1);
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError("empty key", i + 1);
    auto [it, inserted] = out[section].emplace(key, Entry{std::string(trim(line.substr(eq + 1))), i + 1});
    if (!inserted) throw ParseError("duplicate key '" + key + "'", i + 1);
  }
  return out;
}

double to_double(const Entry& e, const std::string& key) {
  const auto v = parse_double(e.value);
  if (!v || !std::isfinite(*v)) throw ParseError("'" + key + "' expects a number", e.line);
  return *v;
}

std::uint64_t to_u64(const Entry& e, const std::string& key) {
  const auto v = parse_int(e.value);
  if (!v || *v < 0) throw ParseError("'" + key + "' expects a non-negative integer", e.line);
  return static_cast<std::uint64_t>(*v);
}

bool to_bool(const Entry& e, const std::string& key) {
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  throw ParseError("'" + key + "' expects true or false", e.line);
}

template <typename T>
std::vector<T> to_list(const Entry& e, const std::string& key) {
  std::vector<T> out;
  if (trim(e.value).empty()) return out;
  for (auto part : split(e.value, ',')) {
    const auto v = parse_int(part);
    if (!v || *v < 0) throw ParseError("'" + key + "' expects a comma-separated list of non-negative integers", e.line);
    out.push_back(static_cast<T>(*v));
  }
  return out;
}

template <typename Fn>
auto wrap_line(const Entry& e, Fn&& fn) {
  try {
    return fn(e.value);
  } catch (const InvalidArgument& ex) {
    throw ParseError(ex.what(), e.line);
  }
}

std::string join(const auto& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  const auto sections = parse_sections(text);
  for (const auto& [section, keys] : sections) {
    for (const auto& [key, e] : keys) {
      const std::string full = section + "." + key;
      auto unknown = [&] { throw ParseError("unknown key '" + full + "'", e.line); };
      if (section == "dataset") {
        if (key == "num_classes") c.dataset.num_classes = to_u64(e, full);
        else if (key == "per_class") c.dataset.per_class = to_u64(e, full);
        else if (key == "class_radius") c.dataset.class_radius = to_double(e, full);
        else if (key == "class_sigma") c.dataset.class_sigma = to_double(e, full);
        else if (key == "outlier_kind") c.dataset.outlier_kind = wrap_line(e, [](auto& v) { return parse_outlier_kind(v); });
        else if (key == "outlier_count") c.dataset.outlier_count = to_u64(e, full);
        else unknown();
      } else if (section == "model") {
        if (key == "hidden") c.hidden = to_list<std::size_t>(e, full);
        else unknown();
      } else if (section == "train") {
        if (key == "epochs") c.epochs = to_u64(e, full);
        else if (key == "batch_size") c.batch_size = to_u64(e, full);
        else if (key == "lr_base") c.lr_base = to_double(e, full);
        else if (key == "momentum") c.momentum = to_double(e, full);
        else if (key == "weight_decay") c.weight_decay = to_double(e, full);
        else if (key == "method") c.method = wrap_line(e, [](auto& v) { return parse_method(v); });
        else if (key == "fixed_T") c.fixed_T = to_double(e, full);
        else if (key == "seeds") c.seeds = to_list<std::uint64_t>(e, full);
        else if (key == "label") c.label = e.value;
        else unknown();
      } else if (section == "alpha") {
        if (key == "schedule") c.alpha_schedule.kind = wrap_line(e, [](auto& v) { return parse_alpha_kind(v); });
        else if (key == "c") c.alpha_schedule.c = to_double(e, full);
        else if (key == "horizon") c.alpha_schedule.horizon = to_u64(e, full);
        else unknown();
      } else if (section == "temperature") {
        if (key == "init") c.temp_init = to_double(e, full);
        else if (key == "eta") c.eta_T = to_double(e, full);
        else if (key == "min") c.t_min = to_double(e, full);
        else if (key == "max") c.t_max = to_double(e, full);
        else if (key == "updates_per_step") c.t_updates_per_step = to_u64(e, full);
        else unknown();
      } else if (section == "objective") {
        if (key == "stop_gradient_target") c.aoe.stop_gradient_target = to_bool(e, full);
        else if (key == "kl_direction_term_a") c.aoe.term_a_direction = wrap_line(e, [](auto& v) { return parse_kl_direction(v); });
        else unknown();
      } else if (section == "eval") {
        if (key == "score") c.score.kind = wrap_line(e, [](auto& v) { return parse_score_kind(v).kind; });
        else if (key == "energy_temperature") c.score.energy_temperature = to_double(e, full);
        else if (key == "tpr_target") c.tpr_target = to_double(e, full);
        else unknown();
      } else {
        throw ParseError("unknown section '" + section + "'", e.line);
      }
    }
  }
  try {
    c.validate();
  } catch (const InvalidArgument& ex) {
    throw ParseError(ex.what(), 0);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("load_config: cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

namespace {

std::string config_text(const ExperimentConfig& c, bool include_run_identity) {
  std::ostringstream os;
  os << "[dataset]\n"
     << "num_classes = " << c.dataset.num_classes << "\n"
     << "per_class = " << c.dataset.per_class << "\n"
     << "class_radius = " << format_double(c.dataset.class_radius) << "\n"
     << "class_sigma = " << format_double(c.dataset.class_sigma) << "\n"
     << "outlier_kind = " << to_string(c.dataset.outlier_kind) << "\n"
     << "outlier_count = " << c.dataset.outlier_count << "\n\n"
     << "[model]\n"
     << "hidden = " << join(c.hidden) << "\n\n"
     << "[train]\n"
     << "epochs = " << c.epochs << "\n"
     << "batch_size = " << c.batch_size << "\n"
     << "lr_base = " << format_double(c.lr_base) << "\n"
     << "momentum = " << format_double(c.momentum) << "\n"
     << "weight_decay = " << format_double(c.weight_decay) << "\n"
     << "method = " << to_string(c.method) << "\n"
     << "fixed_T = " << format_double(c.fixed_T) << "\n";
  if (include_run_identity) {
    os << "seeds = " << join(c.seeds) << "\n";
    if (!c.label.empty()) os << "label = " << c.label << "\n";
  }
  os << "\n[alpha]\n"
     << "schedule = " << to_string(c.alpha_schedule.kind) << "\n"
     << "c = " << format_double(c.alpha_schedule.c) << "\n"
     << "horizon = " << c.alpha_schedule.horizon << "\n\n"
     << "[temperature]\n"
     << "init = " << format_double(c.temp_init) << "\n"
     << "eta = " << format_double(c.eta_T) << "\n"
     << "min = " << format_double(c.t_min) << "\n"
     << "max = " << format_double(c.t_max) << "\n"
     << "updates_per_step = " << c.t_updates_per_step << "\n\n"
     << "[objective]\n"
     << "stop_gradient_target = " << (c.aoe.stop_gradient_target ? "true" : "false") << "\n"
     << "kl_direction_term_a = " << to_string(c.aoe.term_a_direction) << "\n\n"
     << "[eval]\n"
     << "score = " << to_string(c.score) << "\n"
     << "energy_temperature = " << format_double(c.score.energy_temperature) << "\n"
     << "tpr_target = " << format_double(c.tpr_target) << "\n";
  return os.str();
}

}  // namespace

std::string to_config_text(const ExperimentConfig& config) { return config_text(config, true); }

std::string config_hash(const ExperimentConfig& config) {
  const auto text = config_text(config, false);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Training

namespace {

// Seed-stream offsets beyond the data generators (0, 1, 2).
constexpr std::uint64_t kSplitSeedOffset = 3;
constexpr std::uint64_t kInitSeedOffset = 4;
constexpr std::uint64_t kBatchSeedOffset = 5;

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

LabeledBatch gather(const LabeledBatch& b, std::span<const std::size_t> idx) {
  LabeledBatch out{b.features.gather_rows(idx), {}};
  out.labels.reserve(idx.size());
  for (auto i : idx) out.labels.push_back(b.labels[i]);
  return out;
}

void accumulate(LossBreakdown& acc, const LossBreakdown& l) {
  acc.ce_id += l.ce_id;
  acc.align_T_to_uniform += l.align_T_to_uniform;
  acc.align_pred_to_target += l.align_pred_to_target;
  acc.total += l.total;
  acc.alpha_used = l.alpha_used;
}

}  // namespace

SeedResult run_seed(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  DatasetSpec spec = config.dataset;
  spec.seed = seed;

  const auto id_all = gen_id_gaussians(spec);
  const auto outliers = gen_train_outliers(spec);
  const auto test_ood = gen_test_ood(spec);

  // 80/20 train/test split by seeded shuffle.
  auto perm = iota_indices(id_all.size());
  SeededRng split_rng(seed + kSplitSeedOffset);
  split_rng.shuffle(perm);
  const std::size_t n_train = id_all.size() * 4 / 5;
  const auto id_train = gather(id_all, std::span(perm).first(n_train));
  const auto id_test = gather(id_all, std::span(perm).subspan(n_train));

  SeededRng init_rng(seed + kInitSeedOffset);
  SeedResult result;
  result.seed = seed;
  auto& params = result.params;
  params = init_params(config.arch_dims(), init_rng);
  auto opt = OptimizerState::for_params(params, config.lr_base, config.momentum, config.weight_decay, config.epochs);
  TemperatureState temp{config.method == Method::fixed_T ? config.fixed_T : config.temp_init, config.t_min,
                        config.t_max, config.eta_T,
                        config.method == Method::aoe_joint || config.method == Method::aoe_alternating};

  SeededRng batch_rng(seed + kBatchSeedOffset);
  auto id_order = iota_indices(id_train.size());
  auto ood_order = iota_indices(outliers.size());
  const std::size_t bs = config.batch_size;
  const std::size_t n_batches = (id_train.size() + bs - 1) / bs;
  std::vector<std::size_t> ood_idx(bs);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    opt.epoch = epoch;
    const double alpha = alpha_at(config.alpha_schedule, epoch);
    batch_rng.shuffle(id_order);
    batch_rng.shuffle(ood_order);

    LossBreakdown acc;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t lo = b * bs, hi = std::min(lo + bs, id_train.size());
      const auto id_batch = gather(id_train, std::span(id_order).subspan(lo, hi - lo));
      // OOD mini-batches walk the shuffled outliers cyclically.
      for (std::size_t i = 0; i < bs; ++i) ood_idx[i] = ood_order[(b * bs + i) % ood_order.size()];
      const Matrix ood_x = outliers.features.gather_rows(ood_idx);

      LossBreakdown l;
      switch (config.method) {
        case Method::ce_only: l = oe_step(params, opt, id_batch, ood_x, 0.0); break;
        case Method::oe: l = oe_step(params, opt, id_batch, ood_x, alpha); break;
        case Method::aoe_joint: l = joint_step(params, opt, temp, id_batch, ood_x, alpha, config.aoe); break;
        case Method::aoe_alternating:
          l = alternating_step(params, opt, temp, id_batch, ood_x, alpha, config.aoe, config.t_updates_per_step);
          break;
        case Method::fixed_T: l = fixed_temperature_step(params, opt, temp, id_batch, ood_x, alpha, config.aoe); break;
      }
      accumulate(acc, l);
    }
    const double inv = 1.0 / static_cast<double>(n_batches);
    acc.ce_id *= inv;
    acc.align_T_to_uniform *= inv;
    acc.align_pred_to_target *= inv;
    acc.total *= inv;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = acc;
    rec.T = temp.T;
    rec.lr = cosine_lr(opt);
    rec.near = evaluate(params, id_test, test_ood.near.features, config.score, config.tpr_target);
    rec.far = evaluate(params, id_test, test_ood.far.features, config.score, config.tpr_target);
    result.epochs.push_back(rec);
  }

  result.final_near = result.epochs.back().near;
  result.final_far = result.epochs.back().far;
  result.train_outlier_margin = oversoftening_mean_margin(forward(params, outliers.features));
  result.final_T = temp.T;
  return result;
}

// ---------------------------------------------------------------------------
// Summaries

const std::vector<std::string>& summary_metric_names() {
  static const std::vector<std::string> names = {
      "fpr95_near",  "auroc_near",          "fpr95_far",           "auroc_far",        "id_acc",
      "separation_margin_near",  "separation_margin_far", "oversoftening_near", "oversoftening_far",
      "oversoftening_train",     "final_T"};
  return names;
}

double seed_metric(const SeedResult& r, std::string_view name) {
  if (name == "fpr95_near") return r.final_near.fpr95;
  if (name == "auroc_near") return r.final_near.auroc;
  if (name == "fpr95_far") return r.final_far.fpr95;
  if (name == "auroc_far") return r.final_far.auroc;
  if (name == "id_acc") return r.final_near.id_acc;
  if (name == "separation_margin_near") return r.final_near.separation_margin;
  if (name == "separation_margin_far") return r.final_far.separation_margin;
  if (name == "oversoftening_near") return r.final_near.oversoftening_mean_margin;
  if (name == "oversoftening_far") return r.final_far.oversoftening_mean_margin;
  if (name == "oversoftening_train") return r.train_outlier_margin;
  if (name == "final_T") return r.final_T;
  throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

std::vector<MetricStat> aggregate_metrics(const std::vector<SeedResult>& seeds) {
  if (seeds.empty()) throw InvalidArgument("aggregate_metrics: no seeds");
  std::vector<MetricStat> out;
  const double n = static_cast<double>(seeds.size());
  for (const auto& name : summary_metric_names()) {
    double sum = 0.0;
    for (const auto& s : seeds) sum += seed_metric(s, name);
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& s : seeds) ss += (seed_metric(s, name) - mean) * (seed_metric(s, name) - mean);
    out.push_back({name, mean, seeds.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0});
  }
  return out;
}

const MetricStat& RunSummary::metric(std::string_view name) const {
  for (const auto& m : aggregate) {
    if (m.name == name) return m;
  }
  throw InvalidArgument("RunSummary: no metric '" + std::string(name) + "'");
}

std::string epochs_csv(const std::vector<EpochRecord>& records) {
  std::string out = "epoch,ce_id,alignA,alignB,total,alpha,T,lr,fpr95_near,auroc_near,fpr95_far,auroc_far,id_acc\n";
  for (const auto& r : records) {
    const double fields[] = {r.loss.ce_id, r.loss.align_T_to_uniform, r.loss.align_pred_to_target, r.loss.total,
                             r.loss.alpha_used, r.T, r.lr, r.near.fpr95, r.near.auroc, r.far.fpr95, r.far.auroc,
                             r.near.id_acc};
    out += std::to_string(r.epoch);
    for (double v : fields) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

namespace {

ordered_json report_json(const EvalReport& r) {
  ordered_json j;
  j["fpr95"] = r.fpr95;
  j["auroc"] = r.auroc;
  j["id_acc"] = r.id_acc;
  j["separation_margin"] = r.separation_margin;
  j["oversoftening_mean_margin"] = r.oversoftening_mean_margin;
  j["n_id"] = r.n_id;
  j["n_ood"] = r.n_ood;
  j["margin_stats"] = {{"mu_id", r.margins.mu_id},
                       {"mu_ood", r.margins.mu_ood},
                       {"nu_ood_sq", r.margins.nu_ood_sq},
                       {"frac_id_negative_margin", r.margins.frac_id_negative_margin}};
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.fpr95 = j.at("fpr95").get<double>();
  r.auroc = j.at("auroc").get<double>();
  r.id_acc = j.at("id_acc").get<double>();
  r.separation_margin = j.at("separation_margin").get<double>();
  r.oversoftening_mean_margin = j.at("oversoftening_mean_margin").get<double>();
  r.n_id = j.at("n_id").get<std::size_t>();
  r.n_ood = j.at("n_ood").get<std::size_t>();
  const auto& m = j.at("margin_stats");
  r.margins = {m.at("mu_id").get<double>(), m.at("mu_ood").get<double>(), m.at("nu_ood_sq").get<double>(),
               m.at("frac_id_negative_margin").get<double>()};
  return r;
}

ordered_json seed_json(const std::string& hash, const std::string& label, Method method, const SeedResult& r) {
  ordered_json j;
  j["schema"] = "aoe-seed-summary/1";
  j["config_hash"] = hash;
  j["label"] = label;
  j["method"] = to_string(method);
  j["seed"] = r.seed;
  j["epochs"] = r.epochs.size();
  j["final_T"] = r.final_T;
  j["train_outlier_margin"] = r.train_outlier_margin;
  j["near"] = report_json(r.final_near);
  j["far"] = report_json(r.final_far);
  ordered_json metrics;
  for (const auto& name : summary_metric_names()) metrics[name] = seed_metric(r, name);
  j["metrics"] = std::move(metrics);
  return j;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw InvalidArgument("write failed for " + path.string());
}

}  // namespace

std::string seed_summary_json(const std::string& hash, const ExperimentConfig& config, const SeedResult& r) {
  return seed_json(hash, config.display_label(), config.method, r).dump(2) + "\n";
}

SeedResult seed_result_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SeedResult r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.final_T = j.at("final_T").get<double>();
    r.train_outlier_margin = j.at("train_outlier_margin").get<double>();
    r.final_near = report_from_json(j.at("near"));
    r.final_far = report_from_json(j.at("far"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("seed summary: ") + e.what(), 0);
  }
}

std::string run_summary_json(const RunSummary& s) {
  ordered_json j;
  j["schema"] = "aoe-run-summary/1";
  j["config_hash"] = s.config_hash;
  j["label"] = s.label;
  j["method"] = to_string(s.method);
  j["seeds"] = s.seeds;
  auto per_seed = ordered_json::array();
  for (const auto& r : s.per_seed) per_seed.push_back(seed_json(s.config_hash, s.label, s.method, r));
  j["per_seed"] = std::move(per_seed);
  ordered_json agg;
  for (const auto& m : s.aggregate) agg[m.name] = {{"mean", m.mean}, {"std", m.stddev}};
  j["aggregate"] = std::move(agg);
  return j.dump(2) + "\n";
}

RunSummary run_experiment(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out_root) {
  config.validate();
  RunSummary summary;
  summary.config_hash = config_hash(config);
  summary.label = config.display_label();
  summary.method = config.method;
  summary.seeds = config.seeds;

  std::filesystem::path run_dir;
  if (out_root) {
    run_dir = *out_root / summary.config_hash;
    std::filesystem::create_directories(run_dir);
    write_file(run_dir / "config.ini", config_text(config, false));
  }
  for (auto seed : config.seeds) {
    auto r = run_seed(config, seed);
    if (out_root) {
      const auto seed_dir = run_dir / std::to_string(seed);
      std::filesystem::create_directories(seed_dir);
      write_file(seed_dir / "epochs.csv", epochs_csv(r.epochs));
      write_file(seed_dir / "summary.json", seed_summary_json(summary.config_hash, config, r));
      save_checkpoint(r.params, seed_dir / "checkpoint.json");
    }
    summary.per_seed.push_back(std::move(r));
  }
  summary.aggregate = aggregate_metrics(summary.per_seed);
  if (out_root) write_file(run_dir / "run_summary.json", run_summary_json(summary));
  return summary;
}

std::string comparison_csv(const std::vector<RunSummary>& runs) {
  std::string out = "label,metric,mean,std,n_seeds\n";
  for (const auto& run : runs) {
    for (const auto& m : run.aggregate) {
      out += run.label + "," + m.name + "," + format_double(m.mean) + "," + format_double(m.stddev) + "," +
             std::to_string(run.per_seed.size()) + "\n";
    }
  }
  return out;
}

std::string compare_methods(const std::vector<ExperimentConfig>& configs,
                            const std::optional<std::filesystem::path>& out_root) {
  if (configs.empty()) throw InvalidArgument("compare_methods: no configs");
  for (const auto& c : configs) {
    if (!(c.dataset == configs.front().dataset)) throw InvalidArgument("compare_methods: configs use different dataset specs");
    if (c.seeds != configs.front().seeds) throw InvalidArgument("compare_methods: configs use different seeds");
  }
  std::vector<RunSummary> runs;
  for (const auto& c : configs) runs.push_back(run_experiment(c, out_root));
  return comparison_csv(runs);
}

// ---------------------------------------------------------------------------
// Theory suite

bool TheoryReport::all_passed() const noexcept {
  return std::all_of(checks.begin(), checks.end(), [](const TheoryCheck& c) { return c.passed; });
}

std::string TheoryReport::to_json() const {
  ordered_json j;
  j["schema"] = "aoe-theory-report/1";
  j["seed"] = seed;
  j["trials"] = trials;
  j["all_passed"] = all_passed();
  auto arr = ordered_json::array();
  for (const auto& c : checks) {
    arr.push_back({{"name", c.name},
                   {"status", c.passed ? "pass" : "fail"},
                   {"worst_residual", c.worst_residual},
                   {"tolerance", c.tolerance},
                   {"trials", c.trials}});
  }
  j["checks"] = std::move(arr);
  return j.dump(2) + "\n";
}

namespace {

std::vector<double> random_logits(SeededRng& rng, std::size_t k, double scale) {
  std::vector<double> z(k);
  for (double& v : z) v = rng.uniform(-scale, scale);
  return z;
}

// Worst-case tracker: `violation` is how far past the tolerance a trial went.
struct Tracker {
  TheoryCheck check;
  void observe(double residual) { check.worst_residual = std::max(check.worst_residual, residual); }
  TheoryCheck finish(std::size_t trials) {
    check.trials = trials;
    check.passed = check.worst_residual <= check.tolerance;
    return check;
  }
};

}  // namespace

TheoryReport run_theory_suite(std::size_t trials, std::uint64_t seed) {
  if (trials < 1) throw InvalidArgument("run_theory_suite: trials must be >= 1");
  SeededRng rng(seed);
  TheoryReport rep;
  rep.seed = seed;
  rep.trials = trials;

  {  // One explicit step reproduces the closed-form margin update.
    Tracker t{{"thm2_margin_update_exactness", false, 0.0, 1e-12, 0}};
    for (std::size_t i = 0; i < trials; ++i) {
      const auto k = 2 + static_cast<std::size_t>(rng.below(7));
      const auto z = random_logits(rng, k, 5.0);
      const double T = rng.uniform(1.0, 100.0);
      const double eta = 0.1 * (1.0 - rng.uniform());
      t.observe(verify_thm2(z, T, eta).residual);
    }
    rep.checks.push_back(t.finish(trials));
  }
  {  // Uniform-target step contracts every pairwise gap. Residual: max(after - before).
    Tracker t{{"prop1_uniform_contraction", false, 0.0, 1e-12, 0}};
    for (std::size_t i = 0; i < trials; ++i) {
      const auto k = 2 + static_cast<std::size_t>(rng.below(9));
      const auto z = random_logits(rng, k, 5.0);
      double min_gap = 1.0;
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
          if (z[a] != z[b]) min_gap = std::min(min_gap, std::abs(z[a] - z[b]));
        }
      }
      const double eta = std::min(0.01, min_gap / 2.0);
      for (const auto& g : verify_prop1(z, eta)) t.observe(std::max(g.after - g.before, 0.0));
    }
    rep.checks.push_back(t.finish(trials));
  }
  {  // 0 < dm_T < dm_inf for finite T > 1. Residual: worst violation of either inequality.
    Tracker t{{"cor1_finite_T_contraction_order", false, 0.0, 0.0, 0}};
    for (std::size_t i = 0; i < trials; ++i) {
      const auto k = 2 + static_cast<std::size_t>(rng.below(7));
      const auto z = random_logits(rng, k, 5.0);
      const double T = 1.0 + 99.0 * (1.0 - rng.uniform());
      const double eta = 0.1 * (1.0 - rng.uniform());
      const double T_grid[] = {T};
      const auto curve = contraction_curve(z, eta, T_grid);
      const double dm = curve.points.front().delta_m;
      const bool ok = logit_margin(z).m == 0.0 || curve.strictly_ordered;
      t.observe(ok ? 0.0 : std::max({-dm, dm - curve.delta_m_infinity, 1e-300}));
    }
    rep.checks.push_back(t.finish(trials));
  }
  {  // dm at T = 1e9 converges to the uniform-target contraction.
    Tracker t{{"cor1_infinite_T_limit", false, 0.0, 1e-6, 0}};
    for (std::size_t i = 0; i < trials; ++i) {
      const auto k = 2 + static_cast<std::size_t>(rng.below(7));
      const auto z = random_logits(rng, k, 5.0);
      const double eta = 0.1 * (1.0 - rng.uniform());
      const auto mr = logit_margin(z);
      t.observe(std::abs(margin_contraction(z, 1e9, eta) - eta * h_func(mr.m, mr.R)));
    }
    rep.checks.push_back(t.finish(trials));
  }
  {  // MSP sandwich; residual is the largest violation of either bound.
    Tracker t{{"msp_margin_sandwich", false, 0.0, 1e-12, 0}};
    for (std::size_t i = 0; i < trials; ++i) {
      const auto k = 2 + static_cast<std::size_t>(rng.below(9));
      const auto b = msp_margin_bounds(random_logits(rng, k, 10.0));
      t.observe(std::max({b.lower - b.msp, b.msp - b.upper, 0.0}));
    }
    rep.checks.push_back(t.finish(trials));
  }
  {  // K = 2: both bounds equal the MSP.
    Tracker t{{"msp_sandwich_two_class_equality", false, 0.0, 1e-12, 0}};
    for (std::size_t i = 0; i < trials; ++i) {
      const auto b = msp_margin_bounds(random_logits(rng, 2, 10.0));
      t.observe(std::max(std::abs(b.lower - b.msp), std::abs(b.upper - b.msp)));
    }
    rep.checks.push_back(t.finish(trials));
  }
  {  // h(0, R) = 0, increasing in x, decreasing in R, on grids.
    Tracker t{{"h_function_properties", false, 0.0, 0.0, 0}};
    std::size_t n = 0;
    for (int ri = 0; ri <= 20; ++ri) {
      const double R = 0.5 * ri;
      t.observe(std::abs(h_func(0.0, R)));
      for (int xi = 0; xi < 100; ++xi, ++n) {
        const double x1 = -5.0 + 0.1 * xi, x2 = x1 + 0.1;
        if (!(h_func(x2, R) > h_func(x1, R))) t.observe(h_func(x1, R) - h_func(x2, R) + 1e-300);
        if (x1 > 0.0 && !(h_func(x1, R + 0.5) < h_func(x1, R))) t.observe(1e-300 + h_func(x1, R + 0.5) - h_func(x1, R));
      }
    }
    rep.checks.push_back(t.finish(n));
  }
  {  // g(T) = -C1/T + C2/T^2: grid argmin sits at T* = 2 C2 / C1 and g(T*) = -C1^2 / (4 C2) < 0.
    Tracker argmin{{"genbound_optimal_temperature_argmin", false, 0.0, 0.0, 0}};
    Tracker closed{{"genbound_g_at_Tstar_closed_form", false, 0.0, 1e-12, 0}};
    constexpr double step = 1e-3;
    std::size_t n = 0;
    for (int i1 = 1; i1 <= 50; ++i1) {
      for (int i2 = 1; i2 <= 50; ++i2, ++n) {
        const auto consts = genbound_constants(0.1 * i1, 0.1 * i2);
        const double t_star = *consts.T_star;
        const auto count = static_cast<std::size_t>(std::ceil(10.0 * t_star / step));
        std::vector<double> grid(count);
        for (std::size_t g = 0; g < count; ++g) grid[g] = step * static_cast<double>(g + 1);
        const auto chk = verify_optimal_temperature(consts, grid);
        argmin.observe(chk.argmin_near_Tstar ? 0.0 : std::abs(chk.grid_argmin - t_star));
        closed.observe(chk.closed_form_residual);
        if (!chk.better_than_infinite) closed.observe(1.0);
      }
    }
    rep.checks.push_back(argmin.finish(n));
    rep.checks.push_back(closed.finish(n));
  }
  return rep;
}

}  // namespace aoe

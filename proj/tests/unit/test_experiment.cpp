#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aoe/error.hpp"
#include "aoe/experiment.hpp"
#include "aoe/model.hpp"

using namespace aoe;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(Method method) {
  ExperimentConfig c;
  c.dataset.per_class = 40;
  c.dataset.outlier_count = 120;
  c.hidden = {16};
  c.epochs = 4;
  c.batch_size = 32;
  c.method = method;
  c.alpha_schedule.horizon = 4;
  c.seeds = {0, 1};
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config text round trip") {
  auto c = small_config(Method::fixed_T);
  c.fixed_T = 4.5;
  c.label = "my run";
  c.aoe.stop_gradient_target = false;
  c.score = ScoreKind::energy(2.0);
  const auto text = to_config_text(c);
  const auto back = parse_config(text);
  CHECK(to_config_text(back) == text);
  CHECK(back.fixed_T == 4.5);
  CHECK(back.label == "my run");
  CHECK(back.score == c.score);
  CHECK(back.seeds == c.seeds);
  CHECK(config_hash(back) == config_hash(c));
}

TEST_CASE("config hash ignores seeds and label only") {
  auto a = small_config(Method::oe);
  auto b = a;
  b.seeds = {7};
  b.label = "x";
  CHECK(config_hash(a) == config_hash(b));
  b.eta_T = 0.5;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("config parse errors") {
  CHECK(parse_config("").epochs == 100);
  auto line_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{999};
  };
  CHECK(line_of("[train]\nepochs = 3\nbogus = 1\n") == 3);
  CHECK(line_of("[train]\nepochs = 3\nepochs = 4\n") == 3);
  CHECK(line_of("[nope]\nx = 1\n") == 2);
  CHECK(line_of("epochs = 3\n") == 1);
  CHECK(line_of("# c\n[train]\nmethod = sgd\n") == 3);
  CHECK(line_of("[train]\nlr_base = fast\n") == 2);
  CHECK(line_of("[train\n") == 1);
  CHECK_THROWS_AS(parse_config("[train]\nepochs = 0\n"), ParseError);
  CHECK_THROWS_AS(parse_config("[train]\nseeds =\n"), ParseError);
  CHECK_THROWS_AS(parse_config("[train]\nmethod = fixed_T\nfixed_T = 12\n"), ParseError);
}

TEST_CASE("ce_only equals OE with alpha 0") {
  auto ce = small_config(Method::ce_only);
  auto oe = small_config(Method::oe);
  oe.alpha_schedule.kind = AlphaKind::fixed;
  oe.alpha_schedule.c = 0.0;
  const auto a = run_seed(ce, 3), b = run_seed(oe, 3);
  CHECK(a.params == b.params);
  CHECK(epochs_csv(a.epochs) != "");
}

TEST_CASE("run records and invariants") {
  const auto c = small_config(Method::aoe_joint);
  const auto r = run_seed(c, 0);
  REQUIRE(r.epochs.size() == c.epochs);
  for (const auto& e : r.epochs) {
    CHECK((e.T >= 1.0 && e.T <= 10.0));
    CHECK(e.loss.total ==
          doctest::Approx(e.loss.ce_id + e.loss.alpha_used * (e.loss.align_T_to_uniform + e.loss.align_pred_to_target)));
    CHECK((e.near.auroc >= 0.0 && e.near.auroc <= 1.0));
    CHECK(e.near.n_ood == c.dataset.outlier_count);
  }
  CHECK(r.final_T == r.epochs.back().T);
  CHECK(r.final_near.n_id == 40 * 4 / 5);

  const auto csv = epochs_csv(r.epochs);
  CHECK(csv.rfind("epoch,ce_id,alignA,alignB,total,alpha,T,lr,fpr95_near,auroc_near,fpr95_far,auroc_far,id_acc\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(c.epochs + 1));

  auto alt = small_config(Method::aoe_alternating);
  for (const auto& e : run_seed(alt, 0).epochs) {
    CHECK(e.loss.total == doctest::Approx(e.loss.ce_id + e.loss.alpha_used * e.loss.align_pred_to_target));
  }
  auto fixed = small_config(Method::fixed_T);
  fixed.fixed_T = 5.5;
  for (const auto& e : run_seed(fixed, 0).epochs) CHECK(e.T == 5.5);
}

TEST_CASE("persisted runs are deterministic and re-aggregate") {
  auto c = small_config(Method::aoe_joint);
  const auto d1 = fresh_dir("aoe_exp_a"), d2 = fresh_dir("aoe_exp_b");
  const auto s1 = run_experiment(c, d1);
  run_experiment(c, d2);
  const auto hash = s1.config_hash;
  for (auto seed : c.seeds) {
    for (const char* f : {"epochs.csv", "summary.json", "checkpoint.json"}) {
      const auto rel = fs::path(hash) / std::to_string(seed) / f;
      REQUIRE(fs::exists(d1 / rel));
      CHECK(slurp(d1 / rel) == slurp(d2 / rel));
    }
  }
  CHECK(slurp(d1 / hash / "run_summary.json") == slurp(d2 / hash / "run_summary.json"));
  CHECK(parse_config(slurp(d1 / hash / "config.ini")).epochs == c.epochs);

  // Aggregates recomputed from the per-seed files.
  std::vector<SeedResult> reread;
  for (auto seed : c.seeds) reread.push_back(seed_result_from_json(slurp(d1 / hash / std::to_string(seed) / "summary.json")));
  const auto again = aggregate_metrics(reread);
  REQUIRE(again.size() == s1.aggregate.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].name == s1.aggregate[i].name);
    CHECK(again[i].mean == s1.aggregate[i].mean);
    CHECK(again[i].stddev == s1.aggregate[i].stddev);
  }
  CHECK(load_checkpoint(d1 / hash / "0" / "checkpoint.json") == s1.per_seed[0].params);

  const auto j = nlohmann::json::parse(slurp(d1 / hash / "0" / "summary.json"));
  CHECK(j.at("config_hash") == hash);
  CHECK(j.at("near").contains("margin_stats"));
  CHECK(j.at("metrics").size() == summary_metric_names().size());
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("aggregation") {
  SeedResult a, b;
  a.final_near.fpr95 = 0.1;
  b.final_near.fpr95 = 0.3;
  const auto agg = aggregate_metrics({a, b});
  CHECK(agg[0].name == "fpr95_near");
  CHECK(agg[0].mean == doctest::Approx(0.2));
  CHECK(agg[0].stddev == doctest::Approx(std::sqrt(0.02)));
  CHECK(aggregate_metrics({a})[0].stddev == 0.0);
  CHECK_THROWS_AS(aggregate_metrics({}), InvalidArgument);
  CHECK_THROWS_AS(seed_metric(a, "nope"), InvalidArgument);
}

TEST_CASE("compare_methods") {
  CHECK_THROWS_AS(compare_methods({}), InvalidArgument);
  auto a = small_config(Method::oe);
  auto b = small_config(Method::aoe_joint);
  b.dataset.class_sigma = 0.5;
  CHECK_THROWS_AS(compare_methods({a, b}), InvalidArgument);
  b = small_config(Method::aoe_joint);
  b.seeds = {0};
  CHECK_THROWS_AS(compare_methods({a, b}), InvalidArgument);

  a.seeds = {0};
  const auto table = compare_methods({a});
  const auto summary = run_experiment(a);
  CHECK(table == comparison_csv({summary}));
  CHECK(table.rfind("label,metric,mean,std,n_seeds\n", 0) == 0);
  CHECK(table.find("oe,oversoftening_train,") != std::string::npos);
}

TEST_CASE("theory suite") {
  CHECK_THROWS_AS(run_theory_suite(0, 1), InvalidArgument);
  const auto r = run_theory_suite(200, 5);
  CHECK(r.all_passed());
  CHECK(r.to_json() == run_theory_suite(200, 5).to_json());
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j.at("checks").size() == r.checks.size());
  CHECK(j.at("checks")[0].at("status") == "pass");
}

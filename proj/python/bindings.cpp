#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "aoe/detection.hpp"
#include "aoe/error.hpp"
#include "aoe/experiment.hpp"
#include "aoe/metrics.hpp"
#include "aoe/numkernel.hpp"
#include "aoe/objectives.hpp"
#include "aoe/synthdata.hpp"
#include "aoe/theory.hpp"

namespace py = pybind11;
using namespace aoe;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vec(const Array& a) {
  if (a.ndim() != 1) throw InvalidArgument("expected a 1-d array");
  return {a.data(), a.data() + a.size()};
}

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw InvalidArgument("expected a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_matrix(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Array from_vec(std::span<const double> v) {
  Array out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict gradients_dict(const LossGradients& g) {
  py::dict d;
  d["ce_id"] = g.loss.ce_id;
  d["align_T_to_uniform"] = g.loss.align_T_to_uniform;
  d["align_pred_to_target"] = g.loss.align_pred_to_target;
  d["total"] = g.loss.total;
  d["d_id"] = from_matrix(g.d_id);
  d["d_ood"] = from_matrix(g.d_ood);
  d["d_T"] = g.d_T;
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["fpr95"] = r.fpr95;
  d["auroc"] = r.auroc;
  d["id_acc"] = r.id_acc;
  d["separation_margin"] = r.separation_margin;
  d["oversoftening_mean_margin"] = r.oversoftening_mean_margin;
  d["n_id"] = r.n_id;
  d["n_ood"] = r.n_ood;
  return d;
}

ScoreKind score_kind(const std::string& name, double temperature) { return parse_score_kind(name, temperature); }

}  // namespace

PYBIND11_MODULE(_aoe, m) {
  m.doc() = "Adaptive outlier exposure: kernels, losses, OOD metrics and the synthetic experiment driver.";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<DivergenceUndefined>(m, "DivergenceUndefined", PyExc_ArithmeticError);
  py::register_exception<PreconditionViolated>(m, "PreconditionViolated", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  m.def("softmax", [](const Array& z, double T) { return from_vec(softmax(to_vec(z), T).entries()); },
        py::arg("z"), py::arg("temperature") = 1.0);
  m.def("log_sum_exp", [](const Array& z) { return log_sum_exp(to_vec(z)); }, py::arg("z"));
  m.def("kl_divergence",
        [](const Array& p, const Array& q) { return kl_divergence(std::span<const double>(to_vec(p)), to_vec(q)); },
        py::arg("p"), py::arg("q"));

  m.def("score",
        [](const Array& logits, const std::string& kind, double temperature) {
          const auto k = score_kind(kind, temperature);
          if (logits.ndim() == 1) return py::object(py::float_(score(k, to_vec(logits))));
          return py::object(from_vec(score_rows(k, to_matrix(logits))));
        },
        py::arg("logits"), py::arg("kind") = "msp", py::arg("temperature") = 1.0,
        "Score one logit vector (1-d) or each row of a 2-d array; larger means more ID-like.");
  m.def("calibrate_threshold", [](const Array& id, double tpr) { return calibrate_threshold(to_vec(id), tpr); },
        py::arg("id_scores"), py::arg("tpr_target") = 0.95);

  m.def("fpr_at_tpr", [](const Array& id, const Array& ood, double tpr) { return fpr_at_tpr(to_vec(id), to_vec(ood), tpr); },
        py::arg("id_scores"), py::arg("ood_scores"), py::arg("tpr_target") = 0.95);
  m.def("auroc", [](const Array& id, const Array& ood) { return auroc(to_vec(id), to_vec(ood)); }, py::arg("id_scores"),
        py::arg("ood_scores"));
  m.def("oversoftening_mean_margin", [](const Array& z) { return oversoftening_mean_margin(to_matrix(z)); },
        py::arg("ood_logits"));

  m.def("loss_oe",
        [](const Array& id, const std::vector<int>& y, const Array& ood, double alpha) {
          return gradients_dict(loss_oe(to_matrix(id), y, to_matrix(ood), alpha));
        },
        py::arg("id_logits"), py::arg("id_labels"), py::arg("ood_logits"), py::arg("alpha"));
  m.def("loss_aoe",
        [](const Array& id, const std::vector<int>& y, const Array& ood, double T, double alpha, const std::string& mode,
           bool stop_gradient_target, const std::string& kl_direction) {
          TemperatureState temp;
          temp.T = T;
          const AoeOptions opts{parse_kl_direction(kl_direction), stop_gradient_target};
          return gradients_dict(loss_aoe(to_matrix(id), y, to_matrix(ood), temp, alpha, parse_aoe_mode(mode), opts));
        },
        py::arg("id_logits"), py::arg("id_labels"), py::arg("ood_logits"), py::arg("T"), py::arg("alpha"),
        py::arg("mode") = "joint", py::arg("stop_gradient_target") = true, py::arg("kl_direction") = "uniform_first");

  m.def("h_func", &h_func, py::arg("x"), py::arg("R"));
  m.def("margin_contraction", [](const Array& z, double T, double eta) { return margin_contraction(to_vec(z), T, eta); },
        py::arg("z"), py::arg("T"), py::arg("eta"));
  m.def("msp_margin_bounds",
        [](const Array& z) {
          const auto b = msp_margin_bounds(to_vec(z));
          return py::make_tuple(b.lower, b.msp, b.upper);
        },
        py::arg("z"), "Returns (lower, msp, upper).");
  m.def("optimal_temperature",
        [](double c1, double c2) -> std::optional<double> { return genbound_constants(c1, c2).T_star; }, py::arg("C1"),
        py::arg("C2"));

  m.def("run_theory_suite",
        [](std::size_t trials, std::uint64_t seed) {
          const auto r = run_theory_suite(trials, seed);
          return py::module_::import("json").attr("loads")(r.to_json());
        },
        py::arg("trials") = 1000, py::arg("seed") = 0);

  m.def("default_config_text", [] { return to_config_text(ExperimentConfig{}); });
  m.def("config_hash", [](const std::string& text) { return config_hash(parse_config(text)); }, py::arg("config_text"));
  m.def("run_experiment",
        [](const std::string& text, std::optional<std::filesystem::path> out) {
          RunSummary s;
          {
            py::gil_scoped_release release;
            s = run_experiment(parse_config(text), out);
          }
          py::dict d;
          d["config_hash"] = s.config_hash;
          d["label"] = s.label;
          py::dict agg;
          for (const auto& st : s.aggregate) agg[st.name.c_str()] = py::make_tuple(st.mean, st.stddev);
          d["aggregate"] = agg;
          py::list seeds;
          for (const auto& r : s.per_seed) {
            py::dict sd;
            sd["seed"] = r.seed;
            sd["final_T"] = r.final_T;
            sd["near"] = report_dict(r.final_near);
            sd["far"] = report_dict(r.final_far);
            sd["train_outlier_margin"] = r.train_outlier_margin;
            py::list T;
            for (const auto& e : r.epochs) T.append(e.T);
            sd["T_trajectory"] = T;
            seeds.append(sd);
          }
          d["per_seed"] = seeds;
          return d;
        },
        py::arg("config_text"), py::arg("out_root") = py::none(),
        "Run every seed of a config given as text; aggregate values are (mean, std).");
}

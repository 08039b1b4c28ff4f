#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fttab/checkpoint.hpp"
#include "fttab/commands.hpp"
#include "fttab/config.hpp"
#include "fttab/errors.hpp"
#include "fttab/metrics.hpp"
#include "fttab/prior.hpp"

namespace py = pybind11;
using namespace fttab;

namespace {

RunConfig make_config(const std::map<std::string, py::object>& overrides) {
  RunConfig cfg;
  for (const auto& [k, v] : overrides) {
    if (py::isinstance<py::bool_>(v)) cfg.set(k, v.cast<bool>() ? "true" : "false");
    else if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
      std::string joined;
      for (const auto& item : v) joined += (joined.empty() ? "" : ",") + py::str(item).cast<std::string>();
      cfg.set(k, joined);
    } else cfg.set(k, py::str(v).cast<std::string>());
  }
  return cfg;
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> out({m.rows, m.cols});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

std::pair<std::vector<double>, std::size_t> flatten_probs(const py::array_t<double, py::array::c_style | py::array::forcecast>& probs) {
  if (probs.ndim() != 2) throw DimensionError("probabilities must be a 2-D array [rows, classes]");
  return {std::vector<double>(probs.data(), probs.data() + probs.size()), static_cast<std::size_t>(probs.shape(1))};
}

py::dict report_dict(const RepetitionReport& r) {
  py::list seeds;
  for (const auto& s : r.seeds) {
    py::dict d;
    d["seed"] = s.seed;
    d["train_rows"] = s.train_rows;
    d["test_rows"] = s.test_rows;
    d["best_epoch"] = s.best_epoch;
    d["test_auc"] = s.test_auc;
    d["test_accuracy"] = s.test_accuracy;
    seeds.append(d);
  }
  py::dict out;
  out["dataset"] = r.dataset;
  out["variant"] = variant_name(r.variant);
  out["seeds"] = seeds;
  out["mean_auc"] = r.mean_auc;
  out["mean_accuracy"] = r.mean_accuracy;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Feature-tokenized tabular prior-fitted network";

  // Translators run newest first, so subclasses are registered after their bases.
  auto& base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<IndexError>(m, "IndexError", base.ptr());
  auto& numeric = py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", numeric.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  m.def("config_keys", [] {
    std::vector<std::tuple<std::string, std::string, std::string>> out;
    for (const auto& k : RunConfig::keys()) out.emplace_back(k.name, k.default_value, k.help);
    return out;
  });
  m.def("resolve_config", [](const std::map<std::string, py::object>& o) { return make_config(o).serialize(); },
        py::arg("overrides") = std::map<std::string, py::object>{});

  m.def("roc_auc_ovo", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
                          const std::vector<int>& labels) {
    auto [flat, classes] = flatten_probs(probs);
    return roc_auc_ovo(flat, classes, labels);
  }, py::arg("probs"), py::arg("labels"));
  m.def("accuracy", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
                       const std::vector<int>& labels) {
    auto [flat, classes] = flatten_probs(probs);
    return accuracy(flat, classes, labels);
  }, py::arg("probs"), py::arg("labels"));

  m.def("sample_task", [](std::uint64_t seed, std::optional<std::string> family, const std::map<std::string, py::object>& o) {
    const auto prior = make_config(o).prior();
    SyntheticTask t;
    if (!family) t = sample_task(prior, seed);
    else if (*family == "linear") t = sample_task(prior, seed, TaskFamily::linear);
    else if (*family == "mlp") t = sample_task(prior, seed, TaskFamily::mlp);
    else if (*family == "rule") t = sample_task(prior, seed, TaskFamily::rule);
    else throw ConfigError("family: expected linear, mlp or rule");
    py::array_t<double> num({t.rows.count, t.rows.numerical});
    std::copy(t.rows.num.begin(), t.rows.num.end(), num.mutable_data());
    py::array_t<std::int64_t> cat({t.rows.count, t.rows.categorical});
    std::copy(t.rows.cat.begin(), t.rows.cat.end(), cat.mutable_data());
    py::dict d;
    d["family"] = family_name(t.family);
    d["seed"] = t.seed;
    d["num_classes"] = t.num_classes;
    d["category_counts"] = t.category_counts;
    d["numerical"] = num;
    d["categorical"] = cat;
    d["labels"] = py::array_t<int>(t.labels.size(), t.labels.data());
    return d;
  }, py::arg("seed"), py::arg("family") = py::none(), py::arg("overrides") = std::map<std::string, py::object>{});

  m.def("pretrain", [](const std::map<std::string, py::object>& o) {
    const auto cfg = make_config(o);
    PretrainOutcome out;
    {
      py::gil_scoped_release release;
      out = cmd_pretrain(cfg);
    }
    std::vector<double> losses;
    for (const auto& r : out.log.records) losses.push_back(r.loss);
    py::dict d;
    d["checkpoint"] = out.checkpoint;
    d["losses"] = losses;
    d["heldout_loss_start"] = out.log.heldout_loss_start;
    d["heldout_loss_end"] = out.log.heldout_loss_end;
    return d;
  }, py::arg("overrides"));

  m.def("finetune", [](const std::map<std::string, py::object>& o) {
    const auto cfg = make_config(o);
    FinetuneOutcome out;
    {
      py::gil_scoped_release release;
      out = cmd_finetune(cfg);
    }
    py::list reports;
    for (const auto& r : out.reports) reports.append(report_dict(r));
    return reports;
  }, py::arg("overrides"));

  m.def("evaluate", [](const std::map<std::string, py::object>& o) {
    const auto cfg = make_config(o);
    EvaluateOutcome out;
    {
      py::gil_scoped_release release;
      out = cmd_evaluate(cfg);
    }
    py::dict d;
    d["kind"] = out.kind;
    d["accuracy"] = out.accuracy;
    if (out.kind == "in_context") d["majority_baseline"] = out.majority_baseline;
    else d["auc"] = out.auc;
    return d;
  }, py::arg("overrides"));

  m.def("export_heatmaps", [](const std::map<std::string, py::object>& o) {
    const auto out = cmd_export_heatmaps(make_config(o));
    py::dict d;
    d["category_csv"] = out.category_csv;
    d["identifier_csv"] = out.identifier_csv.empty() ? py::object(py::none()) : py::cast(out.identifier_csv);
    return d;
  }, py::arg("overrides"));

  m.def("grad_check", [](const std::map<std::string, py::object>& o) {
    const auto cfg = make_config(o);
    GradCheckOutcome out;
    {
      py::gil_scoped_release release;
      out = cmd_grad_check(cfg);
    }
    py::list comps;
    for (const auto& c : out.components) {
      py::dict d;
      d["component"] = c.component;
      d["max_relative_error"] = c.result.max_relative_error;
      d["entries_checked"] = c.result.entries_checked;
      d["worst_parameter"] = c.result.worst_parameter;
      comps.append(d);
    }
    py::dict d;
    d["passed"] = out.passed;
    d["tolerance"] = out.tolerance;
    d["components"] = comps;
    return d;
  }, py::arg("overrides"));

  m.def("category_gram", [](const std::filesystem::path& ckpt) {
    return to_array(category_gram_matrix(load_finetuned(ckpt).tokenizer.table()));
  }, py::arg("checkpoint"));
  m.def("identifier_cosine", [](const std::filesystem::path& ckpt) -> py::object {
    const auto model = load_finetuned(ckpt);
    if (const auto* ids = model.tokenizer.identifiers()) return to_array(identifier_gram_matrix(*ids));
    return py::none();
  }, py::arg("checkpoint"));
  m.def("mean_abs_offdiag", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
    Matrix mat{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
               std::vector<double>(a.data(), a.data() + a.size())};
    return mean_abs_offdiag(mat);
  });
  m.def("checkpoint_kind", [](const std::filesystem::path& p) { return checkpoint_kind(p); });
}

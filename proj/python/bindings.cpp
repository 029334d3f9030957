#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "vfm/config.hpp"
#include "vfm/dataset.hpp"
#include "vfm/error.hpp"
#include "vfm/experiment.hpp"
#include "vfm/model.hpp"
#include "vfm/process.hpp"
#include "vfm/trainer.hpp"

namespace py = pybind11;
using namespace vfm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array column(const Dataset& ds, double Observation::*field) {
  Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(ds.rows.size())});
  auto v = out.mutable_unchecked<1>();
  for (std::size_t i = 0; i < ds.rows.size(); ++i) v(static_cast<py::ssize_t>(i)) = ds.rows[i].*field;
  return out;
}

// Rows of X are (p1 bar, p2 bar, T1 °C, u %, eta_oil, eta_water).
std::vector<Inputs> inputs_from(const Array& x) {
  if (x.ndim() != 2 || x.shape(1) != 6) throw Error(ErrorCode::Shape, "inputs must have shape (n, 6)");
  auto a = x.unchecked<2>();
  std::vector<Inputs> xs(static_cast<std::size_t>(x.shape(0)));
  for (py::ssize_t i = 0; i < x.shape(0); ++i) xs[static_cast<std::size_t>(i)] = {a(i, 0), a(i, 1), a(i, 2), a(i, 3), a(i, 4), a(i, 5)};
  return xs;
}

py::dict report_dict(const TrainReport& r) {
  py::dict d;
  d["epochs_run"] = r.epochs_run;
  d["best_epoch"] = r.best_epoch;
  d["train_loss"] = r.train_loss;
  d["val_loss"] = r.val_loss;
  d["best_val_loss"] = r.best_val_loss;
  d["diverged"] = r.diverged;
  d["message"] = r.message;
  return d;
}

TrainConfig train_config_from(const py::object& cfg) {
  if (cfg.is_none()) return {};
  const auto text = py::module_::import("json").attr("dumps")(cfg).cast<std::string>();
  return parse_train_config(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_vfm, m) {
  m.doc() = "Virtual flow metering: choke physics, datasets, models and experiments";
  m.attr("__version__") = VFM_VERSION;

  py::register_exception<Error>(m, "VfmError", PyExc_ValueError);

  m.def("evaluate_process", [](double p1, double p2, double t1, double u, double eta_oil, double eta_water) {
    return evaluate_process(default_process(), {p1, p2, t1, u, eta_oil, eta_water});
  }, py::arg("p1_bar"), py::arg("p2_bar"), py::arg("t1_c"), py::arg("u_pct"), py::arg("eta_oil"), py::arg("eta_water"),
        "Noise-free flow of the data-generating process in reporting units.");
  m.def("flow_unit_scale", [] { return default_process().flow_unit_scale; });
  m.def("critical_pressure_ratio",
        [](double x_g, double v_g1, double v_l, double k, double n) { return critical_pressure_ratio(x_g, v_g1, v_l, k, n); },
        py::arg("x_g"), py::arg("v_g1"), py::arg("v_l"), py::arg("k"), py::arg("n"));
  m.def("area_equal_percentage", [](double u, double a_max, double r) {
    ChokeParams p;
    p.a_max = a_max;
    p.rangeability = r;
    return area_equal_percentage(u, p);
  }, py::arg("u_pct"), py::arg("a_max"), py::arg("rangeability"));
  m.def("mae", [](const std::vector<double>& p, const std::vector<double>& t) { return mae(p, t); });
  m.def("quantiles", [](const std::vector<double>& v) {
    const auto q = quantiles(v);
    return py::make_tuple(q.p25, q.p50, q.p75);
  });

  py::class_<Dataset>(m, "Dataset")
      .def("__len__", [](const Dataset& d) { return d.rows.size(); })
      .def_property_readonly("q_true", [](const Dataset& d) { return column(d, &Observation::q_true); })
      .def_property_readonly("y", [](const Dataset& d) { return column(d, &Observation::y); })
      .def_property_readonly("inputs", [](const Dataset& d) {
        Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(d.rows.size()), 6});
        auto v = out.mutable_unchecked<2>();
        for (std::size_t i = 0; i < d.rows.size(); ++i) {
          const auto& x = d.rows[i].x;
          const double row[6] = {x.p1_bar, x.p2_bar, x.t1_c, x.u_pct, x.eta_oil, x.eta_water};
          for (py::ssize_t c = 0; c < 6; ++c) v(static_cast<py::ssize_t>(i), c) = row[c];
        }
        return out;
      })
      .def_property_readonly("train_index", [](const Dataset& d) { return d.split.train; })
      .def_property_readonly("val_index", [](const Dataset& d) { return d.split.val; })
      .def_property_readonly("test_index", [](const Dataset& d) { return d.split.test; })
      .def_property_readonly("generator", [](const Dataset& d) { return d.provenance.generator; })
      .def_property_readonly("sigma_eps", [](const Dataset& d) { return d.provenance.sigma_eps; })
      .def("save", [](const Dataset& d, const std::string& path) { write_dataset_csv(d, path); });

  m.def("sample_d1", [](std::size_t n, double sigma, std::uint64_t seed) { return sample_d1(n, sigma, seed); },
        py::arg("n") = kD1Size, py::arg("sigma_eps") = 0.0, py::arg("seed") = 0);
  m.def("generate_d2", [](std::size_t n, std::uint64_t seed) { return generate_d2(n, seed); },
        py::arg("n") = kTemporalSize, py::arg("seed") = 0);
  m.def("generate_d3", [](std::size_t n, std::uint64_t seed) { return generate_d3(n, seed); },
        py::arg("n") = kTemporalSize, py::arg("seed") = 0);
  m.def("load_dataset", [](const std::string& path) { return read_dataset_csv(path); });

  py::class_<Model>(m, "Model")
      .def_property_readonly("kind", [](const Model& mo) { return std::string(model_name(mo.kind())); })
      .def_property_readonly("parameters", [](const Model& mo) { return mo.params().values; })
      .def_property_readonly("parameter_names", [](const Model& mo) { return mo.params().names; })
      .def("predict", [](const Model& mo, const Array& x) {
        const auto xs = inputs_from(x);
        const auto f = mo.features(xs);
        ModelWorkspace ws;
        Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(xs.size())});
        mo.predict_batch(f, ws, std::span<double>(out.mutable_data(), xs.size()));
        return out;
      }, py::arg("x"), "Predict flow for an (n, 6) array of inputs.")
      .def("checkpoint", [](const Model& mo) { return checkpoint(mo); });

  m.def("build_model", [](const std::string& kind, std::uint64_t seed, const std::vector<int>& hidden) {
    NetSpec net{{6}, 0};
    net.layer_sizes.insert(net.layer_sizes.end(), hidden.begin(), hidden.end());
    net.layer_sizes.push_back(1);
    return build(parse_model_kind(kind), default_context(), net, seed);
  }, py::arg("kind"), py::arg("seed") = 0, py::arg("hidden") = std::vector<int>{50, 50});
  m.def("restore_model", [](const std::string& record) { return restore(record); });
  m.def("train", [](const Model& model, const Dataset& ds, const py::object& config) {
    TrainConfig c = train_config_from(config);
    py::gil_scoped_release release;
    auto [trained, rep] = train(model, ds, c);
    py::gil_scoped_acquire acquire;
    return py::make_tuple(std::move(trained), report_dict(rep));
  }, py::arg("model"), py::arg("dataset"), py::arg("config") = py::none(),
        "MAP training on the dataset's train/validation split. Returns (model, report).");

  m.def("run_experiment", [](const py::object& config) {
    const auto text = py::module_::import("json").attr("dumps")(config).cast<std::string>();
    const RunConfig rc = parse_run_config(nlohmann::json::parse(text));
    ExperimentReport rep;
    {
      py::gil_scoped_release release;
      rep = run_experiment(rc.experiment);
    }
    py::list trials;
    for (const auto& t : rep.trials) {
      py::dict d;
      d["model"] = std::string(model_name(t.model));
      d["control"] = t.control;
      d["trial"] = t.trial;
      d["mae_validation"] = t.mae_validation;
      d["mae_test"] = t.mae_test;
      d["relative_error"] = t.relative_error;
      d["epochs"] = t.epochs;
      d["diverged"] = t.diverged;
      trials.append(d);
    }
    py::list summary;
    for (const auto& c : rep.summary) {
      py::dict d;
      d["model"] = std::string(model_name(c.model));
      d["control"] = c.control;
      d["metric"] = c.metric;
      d["p25"] = c.q.p25;
      d["p50"] = c.q.p50;
      d["p75"] = c.q.p75;
      d["n_ok"] = c.n_ok;
      d["flagged"] = c.flagged;
      summary.append(d);
    }
    py::dict out;
    out["trials"] = trials;
    out["summary"] = summary;
    if (rep.table) {
      py::dict table;
      for (std::size_t i = 0; i < rep.table->models.size(); ++i)
        table[py::str(std::string(model_name(rep.table->models[i])))] =
            py::make_tuple(rep.table->mae_validation[i], rep.table->mae_test[i]);
      out["table"] = table;
    }
    return out;
  }, py::arg("config"), "Run an experiment from a configuration dict (same keys as the JSON files).");
}

// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <map>

#include "vittle/config.hpp"
#include "vittle/discrete_info.hpp"
#include "vittle/perturb.hpp"
#include "vittle/platform.hpp"
#include "vittle/repr.hpp"
#include "vittle/task.hpp"
#include "vittle/trainer.hpp"

namespace py = pybind11;
using namespace vittle;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<double> flat(const Array& a) { return {a.data(), a.data() + a.size()}; }

ReprSet repr_from(const Array& a, const std::string& id) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-d array of representations");
  const auto n = static_cast<std::size_t>(a.shape(0)), d = static_cast<std::size_t>(a.shape(1));
  return {id, 0, Tensor({n, d}, flat(a))};
}

py::dict loss_dict(const LossBreakdown& l) {
  py::dict d;
  d["nll"] = l.nll;
  d["kld_v"] = l.kld_v;
  d["kld_t"] = l.kld_t;
  d["total"] = l.total;
  return d;
}

py::dict metrics_dict(const MetricsRow& m) {
  py::dict d = loss_dict(m.loss);
  d["step"] = m.step;
  d["alpha"] = m.alpha;
  d["lr"] = m.lr;
  return d;
}

py::dict emid_dict(const info::EmidReport& r) {
  py::dict d;
  d["emi_p"] = r.emi_p;
  d["emi_q"] = r.emi_q;
  d["emid"] = r.emid;
  d["bound"] = r.bound;
  d["slack"] = r.slack;
  d["reduced_bound"] = r.reduced_bound;
  d["h_hat"] = r.h_hat;
  d["delta_x_given_z"] = r.delta;
  d["jsd_x"] = r.jsd_x;
  d["jsd_z"] = r.jsd_z;
  d["chain_residual"] = r.chain_residual;
  return d;
}

}  // namespace

PYBIND11_MODULE(_vittle, m) {
  m.doc() = "Toy information-bottleneck instruction tuning: training, perturbation suites and metrics";
  tune_allocator();

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("from_json", &parse_config, py::arg("text"))
      .def_static("from_file", &load_config_file, py::arg("path"))
      .def("to_json", &to_canonical_text)
      .def("validate", &RunConfig::validate)
      .def_property(
          "steps", [](const RunConfig& c) { return c.model.steps; }, [](RunConfig& c, std::size_t s) { c.model.steps = s; })
      .def_property(
          "d", [](const RunConfig& c) { return c.model.d; }, [](RunConfig& c, std::size_t d) { c.model.d = d; })
      .def_property(
          "beta_scale", [](const RunConfig& c) { return c.model.beta_scale; },
          [](RunConfig& c, double b) { c.model.beta_scale = b; })
      .def_property(
          "alpha_max", [](const RunConfig& c) { return c.model.alpha_max; },
          [](RunConfig& c, double a) { c.model.alpha_max = a; })
      .def_property(
          "lr", [](const RunConfig& c) { return c.train.lr; }, [](RunConfig& c, double lr) { c.train.lr = lr; })
      .def("__eq__", [](const RunConfig& a, const RunConfig& b) { return a == b; })
      .def("__repr__", [](const RunConfig& c) { return "RunConfig(" + to_canonical_text(c) + ")"; });

  py::class_<QuerySample>(m, "Sample")
      .def(py::init<>())
      .def_readwrite("visual", &QuerySample::visual)
      .def_readwrite("text", &QuerySample::text)
      .def_readwrite("response", &QuerySample::response)
      .def_readwrite("flags", &QuerySample::flags)
      .def("__eq__", [](const QuerySample& a, const QuerySample& b) { return a == b; });

  py::class_<Trainer>(m, "Trainer")
      .def(py::init([](const RunConfig& c, const std::string& variant, std::uint64_t seed) {
             return Trainer(c, variant_from_string(variant), seed);
           }),
           py::arg("config"), py::arg("variant"), py::arg("seed"))
      .def_property_readonly("step", &Trainer::step)
      .def_property_readonly("finished", &Trainer::finished)
      .def_property_readonly("seed", &Trainer::seed)
      .def_property_readonly("variant", [](const Trainer& t) { return to_string(t.variant()); })
      .def_property_readonly("config", [](const Trainer& t) { return t.config(); })
      .def_property_readonly("alpha", &Trainer::alpha)
      .def_property_readonly("beta", &Trainer::beta)
      .def("train_step", [](Trainer& t) { return metrics_dict(t.train_step()); })
      .def(
          "train",
          [](Trainer& t, std::size_t steps) {
            py::list rows;
            for (const auto& r : continue_training(t, steps)) rows.append(metrics_dict(r));
            return rows;
          },
          py::arg("steps"))
      .def("save", &Trainer::save_file, py::arg("path"))
      .def_static("load", &Trainer::load_file, py::arg("path"))
      .def(
          "evaluate",
          [](const Trainer& t, const std::vector<QuerySample>& data, std::size_t threads) {
            const EvalResult r = evaluate(t.net(), data, threads);
            return py::make_tuple(r.accuracy, r.predictions);
          },
          py::arg("samples"), py::arg("threads") = 1)
      .def(
          "representations",
          [](const Trainer& t, const std::vector<QuerySample>& data, std::size_t layer) {
            return to_numpy(extract(t.net(), data, layer, "samples").vectors);
          },
          py::arg("samples"), py::arg("layer"))
      .def(
          "gradcheck",
          [](const Trainer& t, const std::vector<QuerySample>& batch, double alpha, std::uint64_t noise_seed,
             std::size_t coords) {
            const GradcheckReport r = gradcheck_loss(t.net(), batch, alpha, t.beta(), noise_seed, coords, RngStream(0));
            std::map<std::string, double> out;
            for (const auto& [g, res] : r.groups) out[g] = res.max_rel_error;
            return out;
          },
          py::arg("batch"), py::arg("alpha") = 0.5, py::arg("noise_seed") = 0, py::arg("coords") = 4);

  m.def(
      "train",
      [](const RunConfig& c, const std::string& variant, std::uint64_t seed) {
        TrainingResult r = run_training(c, variant_from_string(variant), seed);
        py::list rows;
        for (const auto& row : r.metrics) rows.append(metrics_dict(row));
        return py::make_tuple(std::move(r.trainer), rows);
      },
      py::arg("config"), py::arg("variant"), py::arg("seed"));

  m.def("eval_dataset", &eval_dataset, py::arg("config"), py::arg("seed"), py::arg("n"));
  m.def(
      "keyed_copy_dataset",
      [](const RunConfig& c, std::size_t n, std::uint64_t seed) {
        return make_keyed_copy_dataset(c.task, c.model, n, RngStream(seed));
      },
      py::arg("config"), py::arg("n"), py::arg("seed"));
  m.def(
      "keyed_copy_answer",
      [](const RunConfig& c, const QuerySample& s) { return keyed_copy_answer(c.task, c.model, s); },
      py::arg("config"), py::arg("sample"));
  m.def(
      "build_suite",
      [](const std::vector<QuerySample>& base, const RunConfig& c, std::uint64_t seed) {
        const Suite s = build_suite(base, c.task, c.model, seed);
        py::dict out;
        for (const auto& member : s.members) out[py::str(member.spec.name())] = member.samples;
        return out;
      },
      py::arg("base"), py::arg("config"), py::arg("seed"));

  m.def("entropy", [](const Array& p) { return info::entropy(flat(p)); }, py::arg("p"));
  m.def("kl", [](const Array& p, const Array& q) { return info::kl(flat(p), flat(q)); }, py::arg("p"), py::arg("q"));
  m.def("jsd", [](const Array& p, const Array& q) { return info::jsd(flat(p), flat(q)); }, py::arg("p"), py::arg("q"));
  m.def(
      "mutual_information",
      [](const Array& joint) {
        if (joint.ndim() != 2) throw py::value_error("expected a 2-d joint table");
        return info::mutual_information(info::DiscreteJoint(static_cast<std::size_t>(joint.shape(0)),
                                                            static_cast<std::size_t>(joint.shape(1)), flat(joint)));
      },
      py::arg("joint"));
  m.def(
      "verify_bound",
      [](std::size_t n, std::array<std::size_t, 5> caps, std::uint64_t seed) {
        const info::VerifySummary s =
            info::verify_bound(n, info::WorldCaps{caps[0], caps[1], caps[2], caps[3], caps[4]}, RngStream(seed));
        py::dict d;
        d["instances"] = s.instances;
        d["violations"] = s.violations;
        d["min_slack"] = s.min_slack;
        d["max_chain_residual"] = s.max_chain_residual;
        py::list reports;
        for (const auto& r : s.reports) reports.append(emid_dict(r));
        d["reports"] = reports;
        return d;
      },
      py::arg("n"), py::arg("caps") = std::array<std::size_t, 5>{4, 4, 5, 4, 4}, py::arg("seed") = 0);

  m.def(
      "cosine_distances",
      [](const Array& clean, const Array& shifted) {
        return pairwise_cosine(repr_from(clean, "clean"), repr_from(shifted, "shifted")).distances;
      },
      py::arg("clean"), py::arg("shifted"));
  m.def(
      "repr_jsd",
      [](const Array& clean, const Array& shifted, std::size_t bits) {
        return repr_jsd(repr_from(clean, "clean"), repr_from(shifted, "shifted"), bits);
      },
      py::arg("clean"), py::arg("shifted"), py::arg("bits") = 4);
  m.def(
      "pca2",
      [](const Array& rows) {
        const ReprSet set = repr_from(rows, "rows");
        const Pca2Result r = pca2(std::span<const ReprSet>(&set, 1));
        Array coords({static_cast<py::ssize_t>(r.coords.size()), py::ssize_t{2}});
        auto view = coords.mutable_unchecked<2>();
        for (std::size_t i = 0; i < r.coords.size(); ++i) {
          view(i, 0) = r.coords[i][0];
          view(i, 1) = r.coords[i][1];
        }
        return py::make_tuple(coords, r.explained);
      },
      py::arg("rows"));
}

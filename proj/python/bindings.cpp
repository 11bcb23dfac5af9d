// Python bindings: KL dual, tabular RMDP engine, verification suite and the
// dataset/train/eval commands.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "drsac/cli/commands.hpp"
#include "drsac/errors.hpp"
#include "drsac/instances.hpp"
#include "drsac/kl_dual.hpp"
#include "drsac/tabular.hpp"
#include "drsac/verify.hpp"

namespace py = pybind11;
using namespace drsac;

namespace {

kl::DiscreteDistribution dist(std::vector<double> values, std::vector<double> probs) {
  return {std::move(values), std::move(probs)};
}

KvConfig kv_from(const std::map<std::string, std::string>& entries) {
  KvConfig kv;
  for (const auto& [k, v] : entries) kv.set(k, v);
  return kv;
}

py::object json_to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_drsac, m) {
  m.doc() = "Distributionally robust soft actor-critic toolkit";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  // ---- KL dual --------------------------------------------------------------
  py::class_<kl::DualSolution>(m, "DualSolution")
      .def_readonly("beta_star", &kl::DualSolution::beta_star)
      .def_readonly("value", &kl::DualSolution::value)
      .def_readonly("at_boundary", &kl::DualSolution::at_boundary)
      .def("__repr__", [](const kl::DualSolution& s) {
        return "DualSolution(beta_star=" + std::to_string(s.beta_star) +
               ", value=" + std::to_string(s.value) +
               ", at_boundary=" + (s.at_boundary ? "True" : "False") + ")";
      });

  m.def("solve_dual",
        [](std::vector<double> values, std::vector<double> probs, double delta) {
          return kl::solve_dual(dist(std::move(values), std::move(probs)), delta);
        },
        py::arg("values"), py::arg("probs"), py::arg("delta"),
        "Worst-case expectation over the KL ball via the 1-D dual.");
  m.def("solve_primal_bruteforce",
        [](std::vector<double> values, std::vector<double> probs, double delta) {
          return kl::solve_primal_bruteforce(dist(std::move(values), std::move(probs)), delta);
        },
        py::arg("values"), py::arg("probs"), py::arg("delta"));
  m.def("dual_objective",
        [](std::vector<double> values, std::vector<double> probs, double beta, double delta) {
          return kl::dual_objective(dist(std::move(values), std::move(probs)), beta, delta);
        },
        py::arg("values"), py::arg("probs"), py::arg("beta"), py::arg("delta"));
  m.def("worst_case_distribution",
        [](std::vector<double> values, std::vector<double> probs, double delta) {
          const auto d = dist(std::move(values), std::move(probs));
          const auto w = kl::worst_case_distribution(d, kl::solve_dual(d, delta));
          return py::make_tuple(w.probs, w.concentrated);
        },
        py::arg("values"), py::arg("probs"), py::arg("delta"),
        "Returns (probs, concentrated).");
  m.def("kl_divergence",
        [](const std::vector<double>& q, const std::vector<double>& p) {
          return kl::kl_divergence(q, p);
        },
        py::arg("q"), py::arg("p"));

  // ---- tabular ----------------------------------------------------------------
  py::class_<tabular::TabularRmdp>(m, "TabularRmdp")
      .def(py::init<>())
      .def_readwrite("n_states", &tabular::TabularRmdp::n_states)
      .def_readwrite("n_actions", &tabular::TabularRmdp::n_actions)
      .def_readwrite("reward", &tabular::TabularRmdp::reward)
      .def_readwrite("transitions", &tabular::TabularRmdp::transitions)
      .def_readwrite("gamma", &tabular::TabularRmdp::gamma)
      .def_readwrite("delta", &tabular::TabularRmdp::delta)
      .def_readwrite("alpha", &tabular::TabularRmdp::alpha)
      .def_readwrite("r_max", &tabular::TabularRmdp::r_max)
      .def("value_bound", &tabular::TabularRmdp::value_bound)
      .def("validate", &tabular::TabularRmdp::validate);

  m.def("random_rmdp",
        [](std::uint64_t seed, int n_states, int n_actions, double gamma, double delta,
           double alpha) {
          Rng rng(seed);
          instances::RmdpShape shape{n_states, n_actions, gamma, delta, alpha};
          return instances::random_rmdp(rng, shape);
        },
        py::arg("seed"), py::arg("n_states") = 3, py::arg("n_actions") = 2, py::arg("gamma") = 0.9,
        py::arg("delta") = 0.1, py::arg("alpha") = 0.1);

  m.def("dr_soft_bellman",
        [](const Matrix& q, const Matrix& pi, const tabular::TabularRmdp& rmdp) {
          return tabular::dr_soft_bellman({q}, {pi}, rmdp).q;
        },
        py::arg("q"), py::arg("policy"), py::arg("rmdp"));
  m.def("nonrobust_soft_bellman",
        [](const Matrix& q, const Matrix& pi, const tabular::TabularRmdp& rmdp) {
          return tabular::nonrobust_soft_bellman({q}, {pi}, rmdp).q;
        },
        py::arg("q"), py::arg("policy"), py::arg("rmdp"));
  m.def("dr_soft_policy_evaluation",
        [](const Matrix& pi, const tabular::TabularRmdp& rmdp, double tol) {
          tabular::EvaluationOptions o;
          o.tol = tol;
          return tabular::dr_soft_policy_evaluation({pi}, rmdp, o).q;
        },
        py::arg("policy"), py::arg("rmdp"), py::arg("tol") = 1e-8);
  m.def("dr_soft_policy_iteration",
        [](const tabular::TabularRmdp& rmdp) {
          const auto r = tabular::dr_soft_policy_iteration(rmdp);
          return py::make_tuple(r.policy.pi, r.q.q, r.iterations);
        },
        py::arg("rmdp"), "Returns (policy, q, iterations).");

  // ---- verification and commands ----------------------------------------------
  m.def("property_names", &verify::property_names);
  m.def("verify",
        [](std::uint64_t seed, double scale, std::set<std::string> only, bool sign_flip_fault) {
          verify::VerifyOptions o;
          o.seed = seed;
          o.scale = scale;
          o.only = std::move(only);
          o.sign_flip_fault = sign_flip_fault;
          nlohmann::json j;
          {
            py::gil_scoped_release release;
            j = verify::run_verification(o).to_json();
          }
          return json_to_python(j);
        },
        py::arg("seed") = verify::VerifyOptions{}.seed, py::arg("scale") = 1.0,
        py::arg("only") = std::set<std::string>{}, py::arg("sign_flip_fault") = false,
        "Runs the property suite and returns the JSON report as a dict.");
  m.def("validate_report",
        [](py::object report) {
          const std::string text = py::str(py::module_::import("json").attr("dumps")(report));
          verify::validate_report_json(nlohmann::json::parse(text));
        },
        py::arg("report"));

  m.def("gen_dataset",
        [](const std::string& out, std::uint64_t seed, const std::map<std::string, std::string>& config) {
          const auto d = cli::cmd_gen_dataset(kv_from(config), seed, out);
          return static_cast<long>(d.size());
        },
        py::arg("out"), py::arg("seed") = 0,
        py::arg("config") = std::map<std::string, std::string>{},
        "Writes a dataset file; returns the number of transitions.");
  m.def("train",
        [](const std::string& data, const std::string& out_dir, std::uint64_t seed,
           const std::map<std::string, std::string>& config, bool resume) {
          agent::TrainResult r;
          {
            py::gil_scoped_release release;
            r = cli::cmd_train(kv_from(config), seed, data, out_dir, resume);
          }
          return py::make_tuple(r.steps, r.metrics_path, r.checkpoint_path);
        },
        py::arg("data"), py::arg("out_dir"), py::arg("seed") = 0,
        py::arg("config") = std::map<std::string, std::string>{}, py::arg("resume") = false,
        "Returns (steps, metrics_path, checkpoint_path).");
  m.def("evaluate",
        [](const std::vector<std::pair<std::string, std::string>>& checkpoints, std::uint64_t seed,
           const std::map<std::string, std::string>& config) {
          const auto rows = cli::cmd_eval(kv_from(config), seed, checkpoints, "");
          py::list out;
          for (const auto& r : rows) {
            py::dict d;
            d["policy"] = r.policy;
            d["param"] = r.param;
            d["value"] = r.value;
            d["mean"] = r.mean;
            d["std"] = r.std;
            d["episodes"] = r.episodes;
            d["seed"] = r.seed;
            out.append(d);
          }
          return out;
        },
        py::arg("checkpoints"), py::arg("seed") = 0,
        py::arg("config") = std::map<std::string, std::string>{},
        "checkpoints: list of (name, path). Returns one dict per sweep row.");
}

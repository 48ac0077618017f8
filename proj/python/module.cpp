// Python bindings for the main operations: problems with loss/grad/HVP
// access, the diagonal-Hessian estimators, the Sophia update, the theory
// bounds, and the experiment runner.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <optional>

#include "sophia/autodiff.hpp"
#include "sophia/config.hpp"
#include "sophia/errors.hpp"
#include "sophia/estimators.hpp"
#include "sophia/experiment.hpp"
#include "sophia/optimizers.hpp"
#include "sophia/problems.hpp"
#include "sophia/theory.hpp"

namespace py = pybind11;
using namespace sophia;

namespace {

Tensor tensor_from(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
  std::vector<int64_t> shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<size_t>(i)] = arr.shape(i);
  if (shape.empty()) shape = {1};
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> arr(shape);
  std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
  return arr;
}

/// Problem handle with direct loss/grad/HVP access on the held-out batch.
struct PyProblem {
  std::shared_ptr<Problem> problem;

  TapeFn fn() const { return loss_fn(*problem, problem->eval_batch()); }
  int64_t dim() const { return problem->dim(); }
  py::array init(uint64_t seed) const { return array_from(problem->init_params(seed)); }
  double loss(py::array_t<double> theta) const {
    return value_and_grad(fn(), tensor_from(theta)).first;
  }
  py::array grad(py::array_t<double> theta) const {
    return array_from(value_and_grad(fn(), tensor_from(theta)).second);
  }
  py::array hvp_(py::array_t<double> theta, py::array_t<double> u) const {
    return array_from(hvp(fn(), tensor_from(theta), tensor_from(u)));
  }
  py::array hessian_diag(py::array_t<double> theta) const {
    return array_from(exact_hessian_diag(fn(), tensor_from(theta)));
  }
  py::array hutchinson(py::array_t<double> theta, uint64_t seed, int64_t probes) const {
    RngStream rng(seed, 0, RngStream::kEstimator);
    return array_from(hutchinson_estimate(fn(), tensor_from(theta), rng, probes).values);
  }
  py::array gnb(py::array_t<double> theta, uint64_t seed) const {
    RngStream rng(seed, 0, RngStream::kEstimator);
    return array_from(
        gnb_estimate(*problem, tensor_from(theta), problem->eval_batch(), rng).values);
  }
};

PyProblem make_problem(const std::string& kind, py::kwargs kwargs) {
  ProblemSpec spec;
  spec.kind = kind;
  for (auto item : kwargs) {
    std::string key = py::cast<std::string>(item.first);
    if (key == "seed") spec.seed = py::cast<uint64_t>(item.second);
    else if (key == "dim") spec.dim = py::cast<int64_t>(item.second);
    else if (key == "kappa") spec.kappa = py::cast<double>(item.second);
    else if (key == "rotated") spec.rotated = py::cast<bool>(item.second);
    else if (key == "classes") spec.classes = py::cast<int64_t>(item.second);
    else if (key == "inputs") spec.inputs = py::cast<int64_t>(item.second);
    else if (key == "hidden") spec.hidden = py::cast<int64_t>(item.second);
    else if (key == "examples") spec.examples = py::cast<int64_t>(item.second);
    else if (key == "vocab") spec.vocab = py::cast<int64_t>(item.second);
    else if (key == "context") spec.context = py::cast<int64_t>(item.second);
    else if (key == "embed") spec.embed = py::cast<int64_t>(item.second);
    else throw ConfigError("unknown problem parameter '" + key + "'");
  }
  return PyProblem{spec.instantiate()};
}

py::dict record_to_dict(const RunRecord& record) {
  size_t n = record.rows.size();
  py::array_t<int64_t> step(n);
  py::array_t<double> loss(n), eval_loss(n), lr(n), unclipped(n), h_norm(n), grad_norm(n);
  py::array_t<bool> clipped(n);
  for (size_t i = 0; i < n; ++i) {
    const RunRow& r = record.rows[i];
    step.mutable_at(i) = r.step;
    loss.mutable_at(i) = r.loss;
    eval_loss.mutable_at(i) = r.eval_loss;
    lr.mutable_at(i) = r.lr;
    unclipped.mutable_at(i) = r.unclipped_frac;
    h_norm.mutable_at(i) = r.h_norm;
    grad_norm.mutable_at(i) = r.grad_norm;
    clipped.mutable_at(i) = r.grad_clip_triggered;
  }
  py::dict d;
  d["step"] = step;
  d["loss"] = loss;
  d["eval_loss"] = eval_loss;
  d["lr"] = lr;
  d["unclipped_frac"] = unclipped;
  d["h_norm"] = h_norm;
  d["grad_norm"] = grad_norm;
  d["grad_clip_triggered"] = clipped;
  d["completed"] = record.status == RunStatus::completed;
  return d;
}

}  // namespace

PYBIND11_MODULE(sophia_opt, m) {
  m.doc() = "Sophia optimizer laboratory: clipped second-order updates, diagonal-Hessian "
            "estimators, benchmark problems and the experiment harness";

  py::register_exception<Error>(m, "SophiaError");

  py::class_<PyProblem>(m, "Problem")
      .def_property_readonly("dim", &PyProblem::dim)
      .def("init_params", &PyProblem::init, py::arg("seed") = 0)
      .def("loss", &PyProblem::loss, py::arg("theta"),
           "loss on the fixed held-out batch")
      .def("grad", &PyProblem::grad, py::arg("theta"))
      .def("hvp", &PyProblem::hvp_, py::arg("theta"), py::arg("u"))
      .def("exact_hessian_diag", &PyProblem::hessian_diag, py::arg("theta"))
      .def("hutchinson_diag", &PyProblem::hutchinson, py::arg("theta"), py::arg("seed") = 0,
           py::arg("probes") = 1)
      .def("gnb_diag", &PyProblem::gnb, py::arg("theta"), py::arg("seed") = 0);

  m.def("make_problem", &make_problem, py::arg("kind"),
        "make_problem('toy2d'|'quadratic'|'classifier'|'tiny_lm', **params)");

  m.def(
      "clip", [](py::array_t<double> z, double rho) { return array_from(clip(tensor_from(z), rho)); },
      py::arg("z"), py::arg("rho"), "elementwise clamp to [-rho, rho]");

  py::class_<SophiaState>(m, "SophiaState")
      .def(py::init([](int64_t dim) { return SophiaState::init(dim); }), py::arg("dim"))
      .def_property_readonly("m", [](const SophiaState& s) { return array_from(s.m); })
      .def_property_readonly("h", [](const SophiaState& s) { return array_from(s.h); })
      .def_readonly("t", &SophiaState::t);

  m.def(
      "sophia_step",
      [](py::array_t<double> theta, py::array_t<double> g,
         std::optional<py::array_t<double>> h_hat, SophiaState& state, double lr, double beta1,
         double beta2, double gamma, double eps, int64_t k, double weight_decay,
         const std::string& estimator) {
        SophiaConfig cfg = SophiaConfig::defaults_for(
            estimator == "gnb" ? EstimatorKind::gnb : EstimatorKind::hutchinson);
        cfg.beta1 = beta1;
        cfg.beta2 = beta2;
        cfg.gamma = gamma;
        cfg.eps = eps;
        cfg.hessian_interval = k;
        cfg.weight_decay = weight_decay;
        std::optional<HessianEstimate> est;
        if (h_hat.has_value())
          est = HessianEstimate{tensor_from(*h_hat), cfg.estimator, 1};
        auto result = sophia_step(tensor_from(theta), tensor_from(g), est, state, cfg, lr);
        return py::make_tuple(array_from(result.theta), result.unclipped_fraction);
      },
      py::arg("theta"), py::arg("g"), py::arg("h_hat"), py::arg("state"), py::arg("lr"),
      py::arg("beta1") = 0.96, py::arg("beta2") = 0.99, py::arg("gamma") = 0.01,
      py::arg("eps") = 1e-12, py::arg("k") = 10, py::arg("weight_decay") = 0.0,
      py::arg("estimator") = "hutchinson",
      "one Sophia update; returns (new_theta, unclipped_fraction) and mutates state");

  m.def("theorem1_bound", &theorem1_bound, py::arg("l0_gap"), py::arg("mu"), py::arg("R"),
        py::arg("d"), py::arg("eps_target"));
  m.def("signgd_lower_bound", &signgd_lower_bound, py::arg("mu"), py::arg("beta"),
        py::arg("delta"), py::arg("eps"));

  m.def(
      "cosine_lr",
      [](int64_t t, int64_t steps, int64_t warmup, double peak_lr, double final_lr_frac) {
        ExperimentConfig cfg;
        cfg.steps = steps;
        cfg.warmup = warmup;
        cfg.peak_lr = peak_lr;
        cfg.final_lr_frac = final_lr_frac;
        return cosine_lr(t, cfg);
      },
      py::arg("t"), py::arg("steps"), py::arg("warmup"), py::arg("peak_lr"),
      py::arg("final_lr_frac") = 0.05);

  m.def(
      "run_experiment",
      [](const std::string& config_path) {
        return record_to_dict(run_experiment(ExperimentConfig::from_file(config_path)));
      },
      py::arg("config_path"), "run a config file; returns telemetry columns as numpy arrays");

  m.def(
      "run_experiment_to_csv",
      [](const std::string& config_path, const std::string& out_csv) {
        RunRecord record = run_experiment(ExperimentConfig::from_file(config_path));
        emit_csv(record, out_csv);
        return record.status == RunStatus::completed;
      },
      py::arg("config_path"), py::arg("out_csv"));

  m.def(
      "tune_gamma",
      [](const std::string& config_path, int64_t probe_steps) {
        return tune_gamma(ExperimentConfig::from_file(config_path), probe_steps);
      },
      py::arg("config_path"), py::arg("probe_steps") = 100);
}

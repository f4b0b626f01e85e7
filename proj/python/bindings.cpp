#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mfgpi/checkpoint.hpp"
#include "mfgpi/config.hpp"
#include "mfgpi/errors.hpp"
#include "mfgpi/metrics.hpp"
#include "mfgpi/reference.hpp"
#include "mfgpi/runner.hpp"
#include "mfgpi/trainer.hpp"

namespace py = pybind11;
using namespace mfgpi;

namespace {

py::dict record_to_dict(const MetricsRecord& r) {
  py::dict d;
  d["iteration"] = r.iteration;
  d["pe_loss"] = r.pe_loss;
  d["pi_objective"] = r.pi_objective;
  d["RE1"] = r.re1;
  d["REinf"] = r.reinf;
  d["RC"] = r.rc;
  d["J_hat"] = r.j_hat;
  d["wall_s"] = r.wall_s;
  return d;
}

RunConfig config_from(const py::object& source) {
  if (py::isinstance<RunConfig>(source)) return source.cast<RunConfig>();
  return load_run_config(py::str(source));
}

/// Training session that keeps the problem and metric context alive. The
/// metric context points into the session, so it is never copied or moved.
class Session {
 public:
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  explicit Session(RunConfig config)
      : config_(std::move(config)), problem_(config_.make_problem()), pi_(problem_, config_.trainer),
        metrics_(problem_, config_) {}

  void step(int count) {
    py::gil_scoped_release release;
    for (int k = 0; k < count && pi_.iteration() < config_.trainer.iterations; ++k) pi_.step();
  }
  std::int64_t iteration() const { return pi_.iteration(); }
  MetricsRecord evaluate() const {
    auto r = metrics_.evaluate(pi_.nets(), pi_.current_stats(), pi_.iteration());
    r.pe_loss = pi_.last_losses().pe_loss;
    r.pi_objective = pi_.last_losses().pi_objective;
    return r;
  }
  Eigen::MatrixXd positions() const { return pi_.ensemble().z; }
  std::vector<int> time_indices() const { return pi_.ensemble().time_index; }
  double value(int n, const Eigen::VectorXd& z) const {
    const auto stats = pi_.current_stats();
    return value_eval(pi_.nets().value, StateSample{n, z}, &stats);
  }
  Eigen::VectorXd control(int n, const Eigen::VectorXd& z) const {
    return control_eval(pi_.nets().control, StateSample{n, z});
  }
  void save(const std::string& path) const { save_checkpoint(path, pi_.state()); }
  double j_star() const { return metrics_.j_star(); }

 private:
  RunConfig config_;
  MfgProblem problem_;
  PolicyIteration pi_;
  MetricsContext metrics_;
};

}  // namespace

PYBIND11_MODULE(_mfgpi, m) {
  m.doc() = "Regenerative policy iteration for finite-horizon mean-field games";

  auto base = py::register_exception<Error>(m, "MfgpiError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<MeasureError>(m, "MeasureError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<IntegrationError>(m, "IntegrationError", base.ptr());
  py::register_exception<ReferenceError>(m, "ReferenceError", base.ptr());
  py::register_exception<MetricError>(m, "MetricError", base.ptr());
  py::register_exception<CompatibilityError>(m, "CompatibilityError", base.ptr());

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("load", &load_run_config, py::arg("path"))
      .def_static(
          "parse",
          [](const std::string& text) {
            std::istringstream in(text);
            return parse_run_config(in, "<string>");
          },
          py::arg("text"))
      .def("dumps",
           [](const RunConfig& c) {
             std::ostringstream out;
             write_run_config(out, c);
             return out.str();
           })
      .def_property(
          "variant", [](const RunConfig& c) { return to_string(c.variant); },
          [](RunConfig& c, const std::string& v) { c.variant = variant_from_string(v); })
      .def_readwrite("d", &RunConfig::d)
      .def_readwrite("steps", &RunConfig::steps)
      .def_readwrite("constants", &RunConfig::constants)
      .def_readwrite("output_dir", &RunConfig::output_dir)
      .def_readwrite("metrics_every", &RunConfig::metrics_every)
      .def_readwrite("checkpoint_every", &RunConfig::checkpoint_every)
      .def_readwrite("snapshot_every", &RunConfig::snapshot_every)
      .def_readwrite("metrics_seed", &RunConfig::metrics_seed)
      .def_property(
          "iterations", [](const RunConfig& c) { return c.trainer.iterations; },
          [](RunConfig& c, int v) { c.trainer.iterations = v; })
      .def_property(
          "ensemble_size", [](const RunConfig& c) { return c.trainer.ensemble_size; },
          [](RunConfig& c, int v) { c.trainer.ensemble_size = v; })
      .def_property(
          "batch_size", [](const RunConfig& c) { return c.trainer.batch_size; },
          [](RunConfig& c, int v) { c.trainer.batch_size = v; })
      .def_property(
          "seed", [](const RunConfig& c) { return c.trainer.seed; },
          [](RunConfig& c, std::uint64_t v) { c.trainer.seed = v; })
      .def_property(
          "width", [](const RunConfig& c) { return c.trainer.width; },
          [](RunConfig& c, int v) { c.trainer.width = v; })
      .def_property(
          "depth", [](const RunConfig& c) { return c.trainer.depth; },
          [](RunConfig& c, int v) { c.trainer.depth = v; })
      .def_property(
          "test_outputs", [](const RunConfig& c) { return c.trainer.test_outputs; },
          [](RunConfig& c, int v) { c.trainer.test_outputs = v; })
      .def("validate", &RunConfig::validate);

  py::class_<Session, std::unique_ptr<Session>>(m, "Session", "Step-by-step training under a run configuration.")
      .def(py::init([](const py::object& config) { return std::make_unique<Session>(config_from(config)); }),
           py::arg("config"))
      .def("step", &Session::step, py::arg("count") = 1)
      .def_property_readonly("iteration", &Session::iteration)
      .def("evaluate", [](const Session& s) { return record_to_dict(s.evaluate()); })
      .def_property_readonly("positions", &Session::positions)
      .def_property_readonly("time_indices", &Session::time_indices)
      .def("value", &Session::value, py::arg("n"), py::arg("z"))
      .def("control", &Session::control, py::arg("n"), py::arg("z"))
      .def("save", &Session::save, py::arg("path"))
      .def_property_readonly("j_star", &Session::j_star);

  m.def(
      "run",
      [](const py::object& config, std::optional<std::uint64_t> seed, std::optional<std::string> output,
         std::string resume) {
        auto cfg = config_from(config);
        if (output) cfg.output_dir = *output;
        RunOptions options;
        options.seed = seed;
        options.resume_from = std::move(resume);
        RunResult result;
        {
          py::gil_scoped_release release;
          result = run_experiment(cfg, options);
        }
        py::dict out;
        out["status"] = result.status;
        out["message"] = result.message;
        out["last_checkpoint"] = result.last_checkpoint;
        out["j_star"] = result.j_star;
        py::list history;
        for (const auto& r : result.history) history.append(record_to_dict(r));
        out["history"] = history;
        return out;
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("output") = py::none(), py::arg("resume") = "",
      "Train under a configuration (path or RunConfig) and write the run directory.");

  m.def(
      "evaluate",
      [](const py::object& config, const std::string& checkpoint, std::optional<std::uint64_t> metrics_seed) {
        return record_to_dict(evaluate_checkpoint(config_from(config), checkpoint, metrics_seed));
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("metrics_seed") = py::none(),
      "Metrics of a saved checkpoint.");

  m.def(
      "export_reference",
      [](const std::string& variant, int d, const std::string& output, std::uint64_t seed) {
        const auto report = export_reference(variant_from_string(variant), d, output, seed);
        return py::make_tuple(report.table_path, report.j_star);
      },
      py::arg("variant"), py::arg("d"), py::arg("output"), py::arg("seed") = 7,
      "Write the reference ODE table and J*; returns (table path, J*).");

  py::class_<ReferenceEvaluator>(m, "Reference", "Exact solution of an LQ or systemic-risk game.")
      .def(py::init([](const std::string& variant, int d, const std::map<std::string, double>& constants) {
             return solve_reference(make_problem(variant_from_string(variant), d, constants));
           }),
           py::arg("variant"), py::arg("d"), py::arg("constants") = std::map<std::string, double>{})
      .def("value", &ReferenceEvaluator::value, py::arg("t"), py::arg("z"))
      .def("control", &ReferenceEvaluator::control, py::arg("t"), py::arg("z"))
      .def("mean", &ReferenceEvaluator::mean, py::arg("t"))
      .def("table", [](const ReferenceEvaluator& r) {
        std::ostringstream out;
        r.write_table(out);
        return out.str();
      });

  m.def(
      "rk_integrate",
      [](const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& f, const Eigen::VectorXd& y0,
         double t0, double t1, double rel_tol, double abs_tol) {
        RkOptions options;
        options.rel_tol = rel_tol;
        options.abs_tol = abs_tol;
        const OdeRhs rhs = [&f](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = f(t, y); };
        const auto sol = rk_integrate(rhs, y0, t0, t1, options);
        return sol(t1);
      },
      py::arg("f"), py::arg("y0"), py::arg("t0"), py::arg("t1"), py::arg("rel_tol") = 1e-8, py::arg("abs_tol") = 1e-10,
      "Adaptive Dormand-Prince integration of y' = f(t, y); returns y(t1).");

  m.def("relative_cost", &relative_cost, py::arg("j_hat"), py::arg("j_star"));
  m.def(
      "relative_errors",
      [](const Eigen::VectorXd& approx, const Eigen::VectorXd& exact) { return relative_errors(approx, exact); },
      py::arg("approx"), py::arg("exact"), "(RE_1, RE_inf) of approximate against exact values.");
  m.attr("METRICS_HEADER") = kMetricsHeader;
}

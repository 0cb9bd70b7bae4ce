#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "feddkc/config.hpp"
#include "feddkc/data.hpp"
#include "feddkc/error.hpp"
#include "feddkc/knowledge.hpp"
#include "feddkc/refinement.hpp"
#include "feddkc/runner.hpp"

namespace py = pybind11;
using namespace feddkc;

namespace {

std::vector<double> to_list(const ProbVector& p) { return {p.probs().begin(), p.probs().end()}; }

Kernel make_kernel(const std::string& kind, double k, double b) {
  if (kind == "affine") return Kernel::linear_affine(k, b);
  if (kind == "exp") return Kernel::exponential();
  throw ConfigError("kernel", "must be 'affine' or 'exp'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Knowledge refinement and federated distillation simulator";
  m.attr("__version__") = std::string(version());

  // Messages start with the error code, e.g. "InvalidTarget: ...".
  py::register_exception<Error>(m, "FeddkcError", PyExc_RuntimeError);

  m.def("softmax", [](std::vector<double> z) { return to_list(softmax(Knowledge(std::move(z)))); }, py::arg("z"));
  m.def("shannon_entropy", [](std::vector<double> p) { return shannon_entropy(ProbVector(std::move(p))); },
        py::arg("p"), "Entropy in bits.");
  m.def("peak_probability",
        [](std::vector<double> p) {
          const Peak peak = peak_probability(ProbVector(std::move(p)));
          return py::make_tuple(peak.value, peak.index);
        },
        py::arg("p"), "(value, index) of the largest entry; ties go to the lowest index.");
  m.def("kl_divergence",
        [](std::vector<double> p, std::vector<double> q) {
          return kl_divergence(ProbVector(std::move(p)), ProbVector(std::move(q)));
        },
        py::arg("p"), py::arg("q"));
  m.def("cross_entropy", [](std::vector<double> p, std::size_t y) { return cross_entropy(ProbVector(std::move(p)), y); },
        py::arg("p"), py::arg("label"));

  m.def("kkr_refine",
        [](std::vector<double> z, double target_peak) {
          return to_list(kkr_refine(Knowledge(std::move(z)), target_peak));
        },
        py::arg("z"), py::arg("target_peak") = 0.11, "Closed-form peak refinement of logits z.");
  m.def("kkr_refine_probs",
        [](std::vector<double> p, double target_peak) { return to_list(kkr_refine(ProbVector(std::move(p)), target_peak)); },
        py::arg("p"), py::arg("target_peak"));
  m.def("kkr_closed_form",
        [](std::vector<double> p, double target_peak) { return kkr_closed_form(ProbVector(std::move(p)), target_peak); },
        py::arg("p"), py::arg("target_peak"), "Unrectified closed form; entries may be negative.");
  m.def("skr_refine",
        [](std::vector<double> z, double target_entropy, double epsilon) {
          BisectionConfig cfg;
          cfg.tolerance = epsilon / 2.0;
          const SkrResult r = skr_refine(Knowledge(std::move(z)), target_entropy, cfg);
          return py::make_tuple(to_list(r.probs), r.theta, r.iterations);
        },
        py::arg("z"), py::arg("target_entropy") = 3.3, py::arg("epsilon") = 1e-3,
        "Returns (probs, theta, iterations).");
  m.def("generalized_kkr_refine",
        [](std::vector<double> z, double target_peak, const std::string& kernel, double k, double b, double epsilon) {
          BisectionConfig cfg;
          const auto r = generalized_kkr_refine(Knowledge(std::move(z)), make_kernel(kernel, k, b), target_peak,
                                                epsilon, cfg);
          return py::make_tuple(to_list(r.probs), r.t, r.iterations);
        },
        py::arg("z"), py::arg("target_peak") = 0.11, py::arg("kernel") = "affine", py::arg("k") = 1.0,
        py::arg("b") = 1.0, py::arg("epsilon") = 1e-3, "Returns (probs, t, iterations).");
  m.def("refine",
        [](std::vector<double> z, const std::string& strategy, double target_peak, double target_entropy,
           double epsilon) {
          RefinementConfig cfg;
          const auto s = parse_strategy(strategy);
          if (!s) throw ConfigError("strategy", "unknown strategy '" + strategy + "'");
          cfg.strategy = *s;
          cfg.target_peak = target_peak;
          cfg.target_entropy = target_entropy;
          cfg.epsilon = epsilon;
          return to_list(refine(Knowledge(std::move(z)), cfg));
        },
        py::arg("z"), py::arg("strategy") = "kkr", py::arg("target_peak") = 0.11, py::arg("target_entropy") = 3.3,
        py::arg("epsilon") = 1e-3);

  m.def("synth_blobs",
        [](std::size_t classes, std::size_t per_class, std::size_t dim, double spread, std::uint64_t seed) {
          Dataset ds = synth_blobs(classes, per_class, dim, spread, seed);
          return py::make_tuple(ds.features, ds.labels, ds.checksum());
        },
        py::arg("classes") = 10, py::arg("per_class") = 500, py::arg("dim") = 32, py::arg("spread") = 1.0,
        py::arg("seed") = 1, "Returns (features, labels, checksum).");
  m.def("dirichlet_partition",
        [](std::vector<int> labels, std::size_t classes, std::size_t clients, double alpha, std::uint64_t seed) {
          Dataset ds;
          ds.features = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), 1);
          ds.labels = std::move(labels);
          ds.class_count = classes;
          return dirichlet_partition(ds, clients, alpha, seed).assignment;
        },
        py::arg("labels"), py::arg("classes"), py::arg("clients"), py::arg("alpha"), py::arg("seed"),
        "Client id per sample.");

  m.def("validate_config",
        [](const std::string& path) {
          const RunConfig cfg = load_config_or_manifest(path);
          cfg.validate();
          return cfg.to_text();
        },
        py::arg("path"), "Validates a config file and returns its canonical text.");
  m.def("run",
        [](const std::string& path, const std::string& output_dir) {
          RunConfig cfg = load_config_or_manifest(path);
          const std::string dir = output_dir.empty() ? resolve_output_dir(cfg) : output_dir;
          const RunReport report = run_and_write(cfg, dir);
          py::list averages;
          for (const auto& s : report.summaries) averages.append(s.avg_top1);
          return py::make_tuple(report.output_dir, averages, report.divergence);
        },
        py::arg("config"), py::arg("output_dir") = "",
        "Runs a config; returns (output_dir, avg_top1 per seed, divergence or None).");
  m.def("compare", [](const std::string& a, const std::string& b) { return compare_runs(a, b).table(); },
        py::arg("baseline"), py::arg("treatment"));
}

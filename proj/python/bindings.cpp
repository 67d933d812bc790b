#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "rfpca/errors.hpp"
#include "rfpca/fpca.hpp"
#include "rfpca/io.hpp"
#include "rfpca/model_selection.hpp"
#include "rfpca/robust_kernels.hpp"
#include "rfpca/simulation.hpp"

namespace py = pybind11;
using namespace rfpca;

namespace {

SparseFunctionalSample sample_from_arrays(const std::vector<std::string>& ids, const std::vector<double>& t,
                                          const std::vector<double>& x,
                                          std::optional<std::pair<double, double>> domain) {
  if (ids.size() != t.size() || t.size() != x.size()) {
    throw Error(ErrorCode::InvalidArgument, "curve_id, t and x must have equal lengths");
  }
  std::ostringstream table;
  table << "curve_id,t,x\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    table << ids[i] << "," << format_double(t[i]) << "," << format_double(x[i]) << "\n";
  }
  std::istringstream in(table.str());
  return parse_curve_table(in, domain);
}

py::array_t<double> apply(const RhoFamily& f, py::array_t<double, py::array::c_style | py::array::forcecast> x,
                          double (*fn)(const RhoFamily&, double)) {
  py::array_t<double> out(x.request().shape);
  const double* in = x.data();
  double* dst = out.mutable_data();
  for (py::ssize_t i = 0; i < x.size(); ++i) dst[i] = fn(f, in[i]);
  return out;
}

std::vector<double> grid_points(const GridSpec& g) { return g.points(); }

}  // namespace

PYBIND11_MODULE(_rfpca, m) {
  m.doc() = "Robust functional principal components for sparse longitudinal data.";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  py::enum_<Variant>(m, "Variant").value("ROB", Variant::Robust).value("LS", Variant::LeastSquares);

  py::class_<RhoFamily>(m, "RhoFamily")
      .def_static("huber", &RhoFamily::huber, py::arg("c") = kHuberC)
      .def_static("bisquare", &RhoFamily::bisquare, py::arg("c"))
      .def_static("square", &RhoFamily::square)
      .def_readonly("c", &RhoFamily::c)
      .def("rho", [](const RhoFamily& f, py::array_t<double> x) { return apply(f, x, rho); }, py::arg("x"))
      .def("psi", [](const RhoFamily& f, py::array_t<double> x) { return apply(f, x, psi); }, py::arg("x"))
      .def("weight", [](const RhoFamily& f, py::array_t<double> x) { return apply(f, x, irls_weight); },
           py::arg("x"));

  m.def(
      "mscale",
      [](const std::vector<double>& r, std::optional<std::vector<double>> w, double c, double b) {
        const MScaleSpec spec{RhoFamily::bisquare(c), b};
        return w ? weighted_mscale(r, *w, spec).scale : mscale(r, spec).scale;
      },
      py::arg("residuals"), py::arg("weights") = py::none(), py::arg("c") = kBisquareScaleC, py::arg("b") = 0.5,
      "Bisquare M-scale solving mean rho(r/s) = b.");
  m.def("mad", [](const std::vector<double>& v) { return mad(v); }, py::arg("values"));

  py::class_<Curve>(m, "Curve")
      .def(py::init<std::string, std::vector<double>, std::vector<double>>(), py::arg("id"), py::arg("times"),
           py::arg("values"))
      .def_readwrite("id", &Curve::id)
      .def_readwrite("times", &Curve::times)
      .def_readwrite("values", &Curve::values);

  py::class_<SparseFunctionalSample>(m, "Sample")
      .def(py::init([](std::vector<Curve> curves, double a, double b) {
             SparseFunctionalSample s{std::move(curves), a, b};
             s.validate();
             return s;
           }),
           py::arg("curves"), py::arg("a"), py::arg("b"))
      .def_static("from_arrays", &sample_from_arrays, py::arg("curve_id"), py::arg("t"), py::arg("x"),
                  py::arg("domain") = py::none())
      .def_readonly("curves", &SparseFunctionalSample::curves)
      .def_readonly("a", &SparseFunctionalSample::a)
      .def_readonly("b", &SparseFunctionalSample::b)
      .def("__len__", &SparseFunctionalSample::size)
      .def("num_observations", &SparseFunctionalSample::num_observations);

  m.def("read_curve_table", &read_curve_table, py::arg("path"), py::arg("domain") = py::none());
  m.def("write_curve_table", &write_curve_table, py::arg("path"), py::arg("sample"));

  py::class_<FitConfig>(m, "FitConfig")
      .def(py::init<>())
      .def_readwrite("variant", &FitConfig::variant)
      .def_readwrite("h_mean", &FitConfig::h_mean)
      .def_readwrite("h_cov", &FitConfig::h_cov)
      .def_readwrite("grid_size", &FitConfig::grid_size)
      .def_readwrite("domain", &FitConfig::domain)
      .def_readwrite("delta", &FitConfig::delta)
      .def_readwrite("tau", &FitConfig::tau)
      .def_readwrite("seed", &FitConfig::seed)
      .def_readwrite("cv_folds", &FitConfig::cv_folds)
      .def_readwrite("cv_candidates", &FitConfig::cv_candidates)
      .def_readwrite("smooth_steps", &FitConfig::smooth_steps);

  py::class_<FpcaFit>(m, "Fit")
      .def_readonly("variant", &FpcaFit::variant)
      .def_readonly("h_mean", &FpcaFit::h_mean)
      .def_readonly("h_cov", &FpcaFit::h_cov)
      .def_property_readonly("grid", [](const FpcaFit& f) { return grid_points(f.mean.grid); })
      .def_property_readonly("mean", [](const FpcaFit& f) { return f.mean.values; })
      .def_property_readonly("covariance", [](const FpcaFit& f) { return f.surface.values; })
      .def_property_readonly("eigenvalues", [](const FpcaFit& f) { return f.eigen.eigenvalues; })
      .def_property_readonly("eigenfunctions", [](const FpcaFit& f) { return f.eigen.eigenfunctions; })
      .def_property_readonly("num_components", [](const FpcaFit& f) { return f.eigen.num_components; })
      .def_property_readonly("scores", [](const FpcaFit& f) { return f.scores.scores; })
      .def_property_readonly("delta", [](const FpcaFit& f) { return f.scores.delta; })
      .def(
          "predict",
          [](const FpcaFit& f, const SparseFunctionalSample& s, std::optional<int> k) {
            return predict_scores(s, f.mean, f.surface, f.eigen, f.scores.delta, k.value_or(f.eigen.num_components))
                .scores;
          },
          py::arg("sample"), py::arg("num_components") = py::none(), "Scores for new curves.")
      .def(
          "reconstruct",
          [](const FpcaFit& f, const Eigen::MatrixXd& scores) {
            return reconstruct(ScoreMatrix{scores, f.scores.delta}, f.eigen, f.mean, static_cast<int>(scores.cols()));
          },
          py::arg("scores"), "Mean plus score-weighted eigenfunctions on the grid, one row per curve.");

  m.def("fit", &fit, py::arg("sample"), py::arg("config") = FitConfig{}, py::call_guard<py::gil_scoped_release>());
  m.def("select_num_components", [](const std::vector<double>& l, double tau) { return select_num_components(l, tau); },
        py::arg("eigenvalues"), py::arg("tau") = 0.9);

  py::class_<SimulatedSample>(m, "SimulatedSample")
      .def_readonly("sample", &SimulatedSample::sample)
      .def_readonly("scores", &SimulatedSample::scores)
      .def_readonly("contaminated", &SimulatedSample::contaminated)
      .def_property_readonly("true_eigenvalues", [](const SimulatedSample& s) { return s.truth.eigenvalues; })
      .def(
          "true_covariance",
          [](const SimulatedSample& s, int m) { return s.truth.surface(GridSpec{s.truth.a, s.truth.b, m}); },
          py::arg("grid_size") = 50)
      .def(
          "true_mean",
          [](const SimulatedSample& s, const std::vector<double>& t) {
            std::vector<double> out;
            for (double v : t) out.push_back(s.truth.mean(v));
            return out;
          },
          py::arg("t"));

  m.def("generate", &generate, py::arg("model"), py::arg("num_curves"), py::arg("seed"));
  m.def("contaminate", &contaminate, py::arg("clean"), py::arg("eps"), py::arg("seed"));
  m.def("matern_cov", py::vectorize(&matern_cov), py::arg("s"), py::arg("t"), py::arg("nu"), py::arg("range"),
        py::arg("sigma"));
  m.def("spearman_rho", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman_rho(x, y); });
  m.def("alignment", [](const std::vector<double>& e, const std::vector<double>& t, double dt) {
    return alignment(e, t, dt);
  }, py::arg("estimate"), py::arg("truth"), py::arg("dt"));
  m.def("frobenius_discrepancy", &frobenius_discrepancy, py::arg("estimate"), py::arg("truth"));

  m.def(
      "run_monte_carlo",
      [](int model, double eps, Variant variant, int replications, int num_curves, std::uint64_t seed, int jobs) {
        MonteCarloConfig cfg;
        cfg.model = model;
        cfg.eps = eps;
        cfg.variant = variant;
        cfg.replications = replications;
        cfg.num_curves = num_curves;
        cfg.seed = seed;
        cfg.jobs = jobs;
        SimulationReport report;
        {
          py::gil_scoped_release release;
          report = run_monte_carlo(cfg);
        }
        py::dict out;
        out["h_mean"] = report.h_mean;
        out["h_cov"] = report.h_cov;
        out["failures"] = report.failures();
        for (const char* metric : {"frob_sq", "frob_sq_raw", "selected_components"}) out[metric] = report.values(metric);
        for (const char* metric : {"alignment", "mse", "m2", "log_loss", "rel_loss"}) {
          py::list per_k;
          for (int k = 0; k < cfg.metric_components; ++k) per_k.append(report.values(metric, k));
          out[metric] = per_k;
        }
        return out;
      },
      py::arg("model") = 1, py::arg("eps") = 0.0, py::arg("variant") = Variant::Robust, py::arg("replications") = 10,
      py::arg("num_curves") = 100, py::arg("seed") = 1, py::arg("jobs") = 1,
      "Per-replication metrics as lists (per-component metrics are nested by k).");
}

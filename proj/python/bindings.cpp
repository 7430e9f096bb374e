#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cli.hpp"
#include "shambayes/classical.hpp"
#include "shambayes/linear_adjust.hpp"
#include "shambayes/model.hpp"
#include "shambayes/report.hpp"
#include "shambayes/sampler.hpp"
#include "shambayes/sim.hpp"
#include "shambayes/study_data.hpp"

namespace py = pybind11;
using namespace shambayes;

namespace {

template <class T>
T parse_or_throw(std::optional<T> v, const std::string& what, const std::string& s) {
  if (!v) throw ValidationError("unknown " + what + " '" + s + "'");
  return *v;
}

ModelSpec make_spec(const std::string& variant, const std::string& prior, const std::optional<py::dict>& fixed) {
  ModelSpec spec;
  spec.variant = parse_or_throw(parse_variant(variant), "variant", variant);
  spec.prior = parse_or_throw(parse_prior(prior), "prior", prior);
  if (fixed) {
    HyperParams h;
    for (auto [k, v] : *fixed) {
      const auto key = k.cast<std::string>();
      const double x = v.cast<double>();
      if (key == "mu_theta") h.mu_theta = x;
      else if (key == "sigma_theta") h.sigma_theta = x;
      else if (key == "mu_b") h.mu_b = x;
      else if (key == "sigma_b") h.sigma_b = x;
      else if (key == "rho") h.rho = x;
      else if (key == "alpha") h.alpha = x;
      else if (key == "ell") h.ell = x;
      else if (key == "period") h.period = x;
      else if (key == "a") h.a = x;
      else if (key == "b_slope") h.b_slope = x;
      else throw ValidationError("unknown hyperparameter '" + key + "'");
    }
    spec.fixed_hyper = h;
  }
  return spec;
}

py::array_t<double> draws_array(const Draws& d) {
  py::array_t<double> a({d.chains, d.draws, d.num_params()});
  std::copy(d.values.begin(), d.values.end(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hierarchical models for sham-controlled experiments";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ModelError>(m, "ModelError", PyExc_RuntimeError);

  m.attr("DEFAULT_SEED") = kDefaultSeed;

  py::class_<StudyRecord>(m, "StudyRecord")
      .def(py::init([](std::string id, double y1, double s1, double y0, double s0, std::optional<double> x,
                       std::optional<int> n1, std::optional<int> n0) {
             return StudyRecord{std::move(id), x, y1, s1, y0, s0, n1, n0};
           }),
           py::arg("id"), py::arg("y1"), py::arg("s1"), py::arg("y0"), py::arg("s0"), py::arg("x") = py::none(),
           py::arg("n1") = py::none(), py::arg("n0") = py::none())
      .def_readwrite("id", &StudyRecord::id)
      .def_readwrite("x", &StudyRecord::x)
      .def_readwrite("y1", &StudyRecord::y1)
      .def_readwrite("s1", &StudyRecord::s1)
      .def_readwrite("y0", &StudyRecord::y0)
      .def_readwrite("s0", &StudyRecord::s0)
      .def_readwrite("n1", &StudyRecord::n1)
      .def_readwrite("n0", &StudyRecord::n0)
      .def("__repr__", [](const StudyRecord& r) {
        std::ostringstream os;
        os << "StudyRecord(" << r.id << ", y1=" << r.y1 << ", s1=" << r.s1 << ", y0=" << r.y0 << ", s0=" << r.s0
           << ")";
        return os.str();
      });

  py::class_<CountRecord>(m, "CountRecord")
      .def(py::init([](std::string id, int n1, int N1, int n0, int N0) {
             return CountRecord{std::move(id), n1, N1, n0, N0};
           }),
           py::arg("id"), py::arg("n1"), py::arg("N1"), py::arg("n0"), py::arg("N0"))
      .def_readwrite("id", &CountRecord::id)
      .def_readwrite("n1", &CountRecord::n1)
      .def_readwrite("N1", &CountRecord::N1)
      .def_readwrite("n0", &CountRecord::n0)
      .def_readwrite("N0", &CountRecord::N0);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<std::vector<StudyRecord>>())
      .def(py::init<std::vector<CountRecord>>())
      .def_static("load", [](const std::string& path) { return ingest(path); })
      .def_static("from_summary_csv", &parse_summary_csv)
      .def_static("from_count_csv", &parse_count_csv)
      .def_static("from_json", &parse_dataset_json)
      .def_property_readonly("kind", [](const Dataset& d) { return d.kind() == DataKind::summary ? "summary" : "count"; })
      .def_property_readonly("ids", [](const Dataset& d) {
        std::vector<std::string> ids;
        for (std::size_t j = 0; j < d.size(); ++j) ids.push_back(d.id(j));
        return ids;
      })
      .def_property_readonly("summaries", &Dataset::summaries)
      .def_property_readonly("counts", &Dataset::counts)
      .def("to_csv", [](const Dataset& d) { return d.kind() == DataKind::summary ? write_summary_csv(d) : write_count_csv(d); })
      .def("to_json", &write_dataset_json)
      .def("__len__", &Dataset::size)
      .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; });

  m.def("log_odds_transform",
        [](const Dataset& d, const std::string& convention) {
          if (convention == "paper") return log_odds_transform(d, LogOddsConvention::paper);
          if (convention == "haldane-anscombe") return log_odds_transform(d, LogOddsConvention::haldane_anscombe);
          throw ValidationError("unknown log-odds convention '" + convention + "'");
        },
        py::arg("data"), py::arg("convention") = "paper");
  m.def("rescale_sham_ses", &rescale_sham_ses, py::arg("data"), py::arg("factor"));
  m.def("sham_chi_square", [](const Dataset& d) {
    const auto c = sham_chi_square(d);
    return py::dict(py::arg("statistic") = c.stat, py::arg("df") = c.df, py::arg("cdf") = c.cdf);
  });

  py::class_<Estimate>(m, "Estimate")
      .def_readonly("id", &Estimate::id)
      .def_readonly("estimate", &Estimate::estimate)
      .def_readonly("se", &Estimate::se)
      .def("__repr__", [](const Estimate& e) {
        std::ostringstream os;
        os << "Estimate(" << e.id << ", " << e.estimate << ", se=" << e.se << ")";
        return os.str();
      });

  m.def("exposed_only", [](const Dataset& d) { return exposed_only(d).entries; });
  m.def("difference", [](const Dataset& d) { return difference(d).entries; });
  m.def("significance",
        [](const Dataset& d, const std::string& method, const std::string& reference) {
          const Method mt = parse_or_throw(parse_method(method), "method", method);
          EstimateSet e;
          if (mt == Method::exposed_only) e = exposed_only(d);
          else if (mt == Method::difference) e = difference(d);
          else throw ValidationError("significance is defined for exposed-only and difference");
          const auto t = classify_significance(e, reference == "t" ? Reference::t : Reference::normal, d);
          py::list out;
          for (const auto& x : t.entries)
            out.append(py::dict(py::arg("id") = x.id, py::arg("statistic") = x.statistic, py::arg("p") = x.p,
                                py::arg("band") = std::string(to_string(x.band))));
          return out;
        },
        py::arg("data"), py::arg("method") = "exposed-only", py::arg("reference") = "normal");

  py::class_<AdjustmentEntry>(m, "AdjustmentEntry")
      .def_readonly("id", &AdjustmentEntry::id)
      .def_readonly("lam", &AdjustmentEntry::lambda)
      .def_readonly("b_hat", &AdjustmentEntry::b_hat)
      .def_readonly("s_post", &AdjustmentEntry::s_post)
      .def_readonly("estimate", &AdjustmentEntry::theta_hat)
      .def_readonly("se", &AdjustmentEntry::se);
  m.def("linear_adjust", [](const Dataset& d, double mu_b, double sigma_b) { return linear_adjust(d, mu_b, sigma_b).entries; },
        py::arg("data"), py::arg("mu_b"), py::arg("sigma_b"));

  py::class_<Model>(m, "Model")
      .def(py::init([](const Dataset& d, const std::string& variant, const std::string& prior,
                       const std::optional<py::dict>& fixed) { return Model(make_spec(variant, prior, fixed), d); }),
           py::arg("data"), py::arg("variant") = "normal-default", py::arg("prior") = "auto",
           py::arg("fixed_hyper") = py::none())
      .def_property_readonly("dimension", &Model::dimension)
      .def("log_posterior", [](const Model& mdl, const std::vector<double>& p) { return mdl.log_posterior(p); })
      .def("gradient", [](const Model& mdl, const std::vector<double>& p) { return mdl.gradient(p); });

  py::class_<ParamSummary>(m, "ParamSummary")
      .def_readonly("name", &ParamSummary::name)
      .def_readonly("mean", &ParamSummary::mean)
      .def_readonly("sd", &ParamSummary::sd)
      .def_readonly("q025", &ParamSummary::q025)
      .def_readonly("q50", &ParamSummary::q50)
      .def_readonly("q975", &ParamSummary::q975)
      .def_readonly("rhat", &ParamSummary::rhat)
      .def_readonly("ess_bulk", &ParamSummary::ess_bulk)
      .def_readonly("mcse_mean", &ParamSummary::mcse_mean)
      .def_readonly("mcse_sd", &ParamSummary::mcse_sd);

  py::class_<FitResult>(m, "FitResult")
      .def_property_readonly("params", [](const FitResult& r) { return r.summary.params; })
      .def_property_readonly("transformed", [](const FitResult& r) { return r.summary.transformed; })
      .def_property_readonly("converged", [](const FitResult& r) { return r.summary.converged; })
      .def_property_readonly("warnings", [](const FitResult& r) { return r.summary.warnings; })
      .def_property_readonly("divergences", [](const FitResult& r) { return r.summary.divergences; })
      .def_property_readonly("names", [](const FitResult& r) { return r.draws.names; })
      .def_property_readonly("draws", [](const FitResult& r) { return draws_array(r.draws); },
                             "Array of shape (chains, draws, parameters)")
      .def("__getitem__",
           [](const FitResult& r, const std::string& name) {
             const auto* p = r.summary.find(name);
             if (!p) throw py::key_error(name);
             return *p;
           })
      .def("summary_json", [](const FitResult& r) { return fit_summary_json(r.summary); })
      .def("draws_csv", [](const FitResult& r) { return draws_csv(r.draws); });

  m.def(
      "fit",
      [](const Dataset& d, const std::string& variant, const std::string& prior, const std::optional<py::dict>& fixed,
         int chains, int warmup, int draws, double target_accept, int max_leapfrog, std::uint64_t seed,
         std::size_t threads, const std::vector<std::pair<std::string, std::string>>& transforms) {
        const ModelSpec spec = make_spec(variant, prior, fixed);
        SamplerConfig sc{chains, warmup, draws, target_accept, max_leapfrog, seed, threads};
        std::vector<TransformRequest> tr;
        for (const auto& [kind, param] : transforms)
          tr.push_back({param, parse_or_throw(parse_transform(kind), "transform", kind)});
        py::gil_scoped_release release;
        return fit(spec, d, sc, tr);
      },
      py::arg("data"), py::arg("variant") = "normal-default", py::arg("prior") = "auto",
      py::arg("fixed_hyper") = py::none(), py::arg("chains") = 4, py::arg("warmup") = 1000, py::arg("draws") = 1000,
      py::arg("target_accept") = 0.8, py::arg("max_leapfrog") = 1024, py::arg("seed") = kDefaultSeed,
      py::arg("threads") = 0, py::arg("transforms") = std::vector<std::pair<std::string, std::string>>{});

  m.def(
      "simulate",
      [](const std::vector<double>& theta, const std::vector<double>& grid, int replicates, double sigma_y,
         const std::vector<std::string>& estimators, std::optional<std::size_t> size, std::uint64_t seed,
         std::size_t threads) {
        SimConfig cfg;
        cfg.theta_source = ThetaSource::fixed_vector;
        cfg.theta_fixed = theta;
        cfg.sigma_b_grid = grid;
        cfg.replicates = replicates;
        cfg.sigma_y = sigma_y;
        cfg.size = size;
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.estimators.clear();
        for (const auto& e : estimators) cfg.estimators.push_back(parse_or_throw(parse_method(e), "estimator", e));
        MetricsGrid g;
        {
          py::gil_scoped_release release;
          g = run_grid(cfg);
        }
        py::list rows;
        for (const auto& c : g.cells) {
          for (int k = 0; k < kNumMetrics; ++k) {
            rows.append(py::dict(py::arg("sigma_b") = c.sigma_b,
                                 py::arg("estimator") = std::string(to_string(c.estimator)),
                                 py::arg("metric") = std::string(to_string(static_cast<MetricKind>(k))),
                                 py::arg("value") = c.stats[k].value, py::arg("mc_se") = c.stats[k].mc_se,
                                 py::arg("n_used") = c.stats[k].n_used, py::arg("n_failed") = c.n_failed));
          }
        }
        return rows;
      },
      py::arg("theta"), py::arg("grid") = std::vector<double>{0.0, 0.02, 0.04, 0.06, 0.08, 0.10},
      py::arg("replicates") = 200, py::arg("sigma_y") = 0.04,
      py::arg("estimators") = std::vector<std::string>{"exposed-only", "difference"}, py::arg("size") = py::none(),
      py::arg("seed") = kDefaultSeed, py::arg("threads") = 0);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit code, stdout, stderr).");
}

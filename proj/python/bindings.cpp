#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "voikit/config.hpp"
#include "voikit/enbs.hpp"
#include "voikit/evppi.hpp"
#include "voikit/evsi.hpp"
#include "voikit/psa.hpp"

namespace py = pybind11;
using namespace voi;

namespace {

py::dict estimate_to_dict(const VoiEstimate& est) {
  py::dict d;
  d["kind"] = to_string(est.kind);
  d["method"] = est.method;
  d["value"] = est.value;
  d["mc_se"] = est.mc_se ? py::cast(*est.mc_se) : py::none();
  d["N"] = est.design_n ? py::cast(*est.design_n) : py::none();
  py::dict diag;
  for (const auto& [k, v] : est.diagnostics.values) diag[py::str(k)] = v;
  d["diagnostics"] = diag;
  d["warnings"] = est.diagnostics.warnings;
  return d;
}

std::string dataset_csv(const PsaDataset& ds) {
  std::ostringstream os;
  save_psa_dataset(os, ds);
  return os.str();
}

StudyDesign design_for(const BuiltinModel& bm, long n) {
  return n > 0 ? bm.default_design.with_sample_size(n) : bm.default_design;
}

void register_errors(py::module_& m) {
  static py::exception<Error> exc(m, "VoikitError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      exc(e.what());
    }
  });
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Value-of-information analysis over PSA datasets: EVPI, EVPPI, four EVSI "
            "approximation methods, a nested Monte Carlo oracle, and ENBS/COSS.";
  register_errors(m);

  py::class_<PsaDataset>(m, "PsaDataset")
      .def_property_readonly("rows", &PsaDataset::rows)
      .def_property_readonly("n_strategies", &PsaDataset::n_strategies)
      .def_property_readonly("parameter_names", &PsaDataset::parameter_names)
      .def("parameter", [](const PsaDataset& ds, const std::string& name) { return ds.parameter(name); })
      .def("effect", [](const PsaDataset& ds, std::size_t t) { return ds.effect(t); })
      .def("cost", [](const PsaDataset& ds, std::size_t t) { return ds.cost(t); })
      .def("to_csv", &dataset_csv)
      .def("save", [](const PsaDataset& ds, const std::string& path) { save_psa_dataset_file(path, ds); })
      .def_static("load", [](const std::string& path) { return load_psa_dataset_file(path).psa; })
      .def_static("from_csv", [](const std::string& text) {
        std::istringstream in(text);
        return load_psa_dataset(in).psa;
      });

  py::class_<AugmentedPsaDataset>(m, "AugmentedPsaDataset")
      .def_property_readonly("phi_names",
                             [](const AugmentedPsaDataset& a) { return a.phi_names; })
      .def("to_csv",
           [](const AugmentedPsaDataset& a) {
             std::ostringstream os;
             save_psa_dataset(os, a);
             return os.str();
           })
      .def("save", [](const AugmentedPsaDataset& a, const std::string& path) {
        save_psa_dataset_file(path, a);
      })
      .def_static("load", [](const std::string& path, std::vector<std::string> phi) {
        return load_psa_dataset_file(path).to_augmented(std::move(phi));
      });

  m.def("builtin_models", &builtin_model_names, "Names of the built-in example models.");

  m.def(
      "run_psa",
      [](const std::string& model, std::size_t s, std::uint64_t seed, int threads) {
        return run_psa(make_builtin_model(model).model, s, seed, threads);
      },
      py::arg("model"), py::arg("s"), py::arg("seed"), py::arg("threads") = 0,
      "Sample a PSA dataset from a built-in model's priors.");

  m.def(
      "evpi",
      [](const PsaDataset& ds, double lam) {
        return estimate_to_dict(evpi(compute_net_benefit(ds, WtpThreshold{lam})));
      },
      py::arg("ds"), py::arg("lam"));

  m.def(
      "curves",
      [](const PsaDataset& ds, const std::vector<double>& lambdas) {
        const DecisionUncertaintyCurves c = decision_uncertainty_curves(ds, lambdas);
        py::list rows;
        for (std::size_t l = 0; l < c.thresholds.size(); ++l) {
          for (std::size_t t = 0; t < c.ceac.cols(); ++t) {
            py::dict r;
            r["lambda"] = c.thresholds[l];
            r["strategy"] = t + 1;
            r["ceac"] = c.ceac.at(l, t);
            r["elc"] = c.elc.at(l, t);
            r["ceaf"] = c.ceaf[l] == t;
            rows.append(std::move(r));
          }
        }
        return rows;
      },
      py::arg("ds"), py::arg("lambdas"));

  m.def(
      "evppi",
      [](const PsaDataset& ds, const std::vector<std::string>& phi, double lam, int bootstrap,
         int threads) {
        EvppiOptions options;
        options.bootstrap_replicates = bootstrap;
        options.threads = threads;
        const EvppiResult result = estimate_evppi(ds, phi, WtpThreshold{lam}, options);
        return py::make_tuple(estimate_to_dict(result.estimate), result.augmented);
      },
      py::arg("ds"), py::arg("phi"), py::arg("lam"), py::arg("bootstrap") = 200,
      py::arg("threads") = 0,
      "Regression-based EVPPI; returns (estimate, eta-augmented dataset).");

  m.def(
      "evsi_rb",
      [](const PsaDataset& ds, const std::string& model, long n, double lam, std::uint64_t seed,
         int threads) {
        const BuiltinModel bm = make_builtin_model(model);
        EvsiOptions options;
        options.threads = threads;
        return estimate_to_dict(
            evsi_rb(ds, design_for(bm, n), WtpThreshold{lam > 0 ? lam : bm.default_lambda}, seed,
                    options));
      },
      py::arg("ds"), py::arg("model"), py::arg("n"), py::arg("lam") = 0.0, py::arg("seed") = 1,
      py::arg("threads") = 0);

  m.def(
      "evsi_is",
      [](const AugmentedPsaDataset& aug, const std::string& model, long n, double lam,
         std::uint64_t seed, int threads) {
        const BuiltinModel bm = make_builtin_model(model);
        EvsiOptions options;
        options.threads = threads;
        return estimate_to_dict(
            evsi_is(aug, design_for(bm, n), WtpThreshold{lam > 0 ? lam : bm.default_lambda}, seed,
                    options));
      },
      py::arg("aug"), py::arg("model"), py::arg("n"), py::arg("lam") = 0.0, py::arg("seed") = 1,
      py::arg("threads") = 0);

  m.def(
      "evsi_ga",
      [](const PsaDataset& ds, const std::string& model, const std::vector<long>& n_list,
         double lam, std::uint64_t seed, int threads) {
        const BuiltinModel bm = make_builtin_model(model);
        const StudyDesign design = bm.default_design;
        std::vector<EssEstimate> ess;
        for (const auto& name : design.phi_names) {
          const auto outcome = std::find_if(
              design.outcomes.begin(), design.outcomes.end(),
              [&](const OutcomeSpec& o) { return o.linked_parameter == name; });
          try {
            ess.push_back(ess_direct(bm.model.parameter(name), *outcome));
          } catch (const Error&) {
            ess.push_back(ess_from_summary(design, ds, name, 50, seed, threads));
          }
        }
        EvsiOptions options;
        options.threads = threads;
        py::list out;
        for (const auto& est :
             evsi_ga(ds, design, ess, WtpThreshold{lam > 0 ? lam : bm.default_lambda}, n_list,
                     options))
          out.append(estimate_to_dict(est));
        return out;
      },
      py::arg("ds"), py::arg("model"), py::arg("n_list"), py::arg("lam") = 0.0, py::arg("seed") = 1,
      py::arg("threads") = 0);

  m.def(
      "evsi_mm",
      [](const AugmentedPsaDataset& aug, const std::string& model, long n, double lam, int q,
         std::uint64_t seed, int threads) {
        const BuiltinModel bm = make_builtin_model(model);
        EvsiOptions options;
        options.threads = threads;
        return estimate_to_dict(evsi_mm(bm.model, aug, design_for(bm, n),
                                        WtpThreshold{lam > 0 ? lam : bm.default_lambda}, q, seed,
                                        options));
      },
      py::arg("aug"), py::arg("model"), py::arg("n"), py::arg("lam") = 0.0, py::arg("q") = 31,
      py::arg("seed") = 1, py::arg("threads") = 0);

  m.def(
      "evsi_oracle",
      [](const std::string& model, long n, double lam, std::size_t outer, std::size_t inner,
         std::uint64_t seed, int threads) {
        const BuiltinModel bm = make_builtin_model(model);
        EvsiOptions options;
        options.threads = threads;
        return estimate_to_dict(evsi_oracle(bm.model, design_for(bm, n),
                                            WtpThreshold{lam > 0 ? lam : bm.default_lambda}, outer,
                                            inner, seed, options));
      },
      py::arg("model"), py::arg("n"), py::arg("lam") = 0.0, py::arg("outer") = 2000,
      py::arg("inner") = 2000, py::arg("seed") = 1, py::arg("threads") = 0);

  m.def(
      "ess_direct",
      [](const std::string& model, const std::string& phi) {
        const BuiltinModel bm = make_builtin_model(model);
        const std::string name = phi.empty() ? bm.default_design.phi_names.front() : phi;
        const auto outcome = std::find_if(
            bm.default_design.outcomes.begin(), bm.default_design.outcomes.end(),
            [&](const OutcomeSpec& o) { return o.linked_parameter == name; });
        const EssEstimate est = ess_direct(bm.model.parameter(name), *outcome);
        return py::make_tuple(est.parameter, est.n0, est.method);
      },
      py::arg("model"), py::arg("phi") = std::string());

  m.def(
      "population_scale",
      [](double evsi_pp, double incidence, long horizon, double discount) {
        return population_scale(evsi_pp, PopulationSpec{incidence, horizon, discount});
      },
      py::arg("evsi_per_person"), py::arg("incidence"), py::arg("horizon") = 1,
      py::arg("discount") = 0.0);

  m.def(
      "enbs",
      [](const std::vector<std::pair<long, double>>& evsi_by_n, double incidence, long horizon,
         double discount, double fixed, double per_participant) {
        const EnbsCurve curve = enbs_curve(evsi_by_n, PopulationSpec{incidence, horizon, discount},
                                           CostModel{fixed, per_participant});
        py::dict d;
        d["optimal_N"] = curve.optimal_n;
        d["max_enbs"] = curve.max_enbs;
        d["research_worthwhile"] = curve.research_worthwhile;
        py::list pts;
        for (const auto& pt : curve.points) {
          py::dict p;
          p["N"] = pt.n;
          p["evsi_pp"] = pt.evsi_per_person;
          p["evsi_pop"] = pt.evsi_population;
          p["cost"] = pt.cost;
          p["enbs"] = pt.enbs;
          pts.append(std::move(p));
        }
        d["points"] = pts;
        return d;
      },
      py::arg("evsi_by_n"), py::arg("incidence"), py::arg("horizon") = 1, py::arg("discount") = 0.0,
      py::arg("fixed_cost") = 0.0, py::arg("cost_per_participant") = 0.0);
}

#include "voikit/evppi.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "voikit/rng.hpp"

namespace voi {

namespace {

std::string describe_failure(std::size_t strategy, const MetamodelReport& rep) {
  std::ostringstream os;
  os << "metamodel diagnostics FAIL for strategy t" << strategy + 1
     << ": residual mean " << rep.residual_mean << ", residual-fitted corr "
     << rep.residual_fitted_corr << ", heteroscedasticity R^2 " << rep.het_r2
     << ", outliers " << rep.outlier_count;
  for (const auto& n : rep.notes) os << "; " << n;
  return os.str();
}

}  // namespace

EvppiResult estimate_evppi(const PsaDataset& ds, const std::vector<std::string>& phi_names,
                           WtpThreshold lambda, const EvppiOptions& options) {
  if (phi_names.empty()) throw argument_error("phi must be non-empty");
  if (phi_names.size() > static_cast<std::size_t>(options.metamodel.max_dimension))
    throw dimension_error("EVPPI regression supports at most " +
                          std::to_string(options.metamodel.max_dimension) +
                          " phi components; group parameters into summaries first");
  std::vector<std::vector<double>> covariates;
  covariates.reserve(phi_names.size());
  for (const auto& name : phi_names) covariates.push_back(ds.parameter(name));

  const NetBenefitMatrix nb = compute_net_benefit(ds, lambda);
  const std::size_t ref = choose_reference_strategy(nb.values);
  const IncrementalNetBenefitMatrix inb = compute_incremental_net_benefit(nb, ref);
  const std::size_t S = ds.rows();
  const std::size_t T = ds.n_strategies();

  // One fitted conditional-mean column per non-reference strategy.
  std::vector<Metamodel> models;
  std::vector<std::size_t> model_strategy;
  EvppiResult result;
  Matrix mu(S, T);  // INB scale, reference column zero
  for (std::size_t t = 0; t < T; ++t) {
    if (t == ref) continue;
    std::vector<double> response(S);
    for (std::size_t s = 0; s < S; ++s) response[s] = inb.values.at(s, t);
    Metamodel m = fit_metamodel(covariates, response, options.metamodel);
    const MetamodelReport rep = m.report();
    if (rep.status == DiagnosticStatus::fail) throw estimation_error(describe_failure(t, rep));
    for (std::size_t s = 0; s < S; ++s) mu.at(s, t) = m.fitted()[s];
    result.reports.push_back(rep);
    models.push_back(std::move(m));
    model_strategy.push_back(t);
  }

  VoiEstimate est;
  est.kind = VoiKind::evppi;
  est.method = "regression";
  double se_rows = 0.0;
  est.value = clamp_voi(max_gain_estimate(mu, &se_rows), est.diagnostics);
  est.diagnostics.values["row_mc_se"] = se_rows;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::string tag = "t" + std::to_string(model_strategy[i] + 1);
    est.diagnostics.values["r_squared." + tag] = models[i].stats().r_squared;
    est.diagnostics.values["edf." + tag] = models[i].stats().effective_df;
    if (result.reports[i].status == DiagnosticStatus::warn)
      est.diagnostics.warn("metamodel WARN for " + tag);
  }

  // Bootstrap over PSA rows; smoothing weights and knots stay frozen.
  const int B = options.bootstrap_replicates;
  if (B > 1) {
    std::vector<double> replicate(static_cast<std::size_t>(B));
    parallel_for(static_cast<std::size_t>(B), options.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t b = begin; b < end; ++b) {
        RngStream rng(options.bootstrap_seed, b, RngPurpose::bootstrap);
        std::vector<std::size_t> rows(S);
        for (std::size_t s = 0; s < S; ++s)
          rows[s] = std::min(static_cast<std::size_t>(rng.uniform() * static_cast<double>(S)), S - 1);
        Matrix mu_b(S, T);
        for (std::size_t i = 0; i < models.size(); ++i) {
          const std::vector<double> fitted = models[i].refit_fitted_on_rows(rows);
          for (std::size_t s = 0; s < S; ++s) mu_b.at(s, model_strategy[i]) = fitted[s];
        }
        replicate[b] = std::max(0.0, max_gain_estimate(mu_b, nullptr));
      }
    });
    double mean = 0.0;
    for (double v : replicate) mean += v;
    mean /= static_cast<double>(B);
    double var = 0.0;
    for (double v : replicate) var += (v - mean) * (v - mean);
    est.mc_se = std::sqrt(var / static_cast<double>(B - 1));
  } else {
    est.mc_se = se_rows;
  }

  // eta on the NB scale: fitted INB plus the reference strategy's mean NB, the
  // reference column itself being that constant profile.
  const double ref_mean = nb.values.column_mean(ref);
  AugmentedPsaDataset aug;
  aug.base = ds;
  aug.nmb = nb.values;
  aug.eta = Matrix(S, T);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t t = 0; t < T; ++t)
      aug.eta.at(s, t) = t == ref ? ref_mean : mu.at(s, t) + ref_mean;
  }
  aug.phi_names = phi_names;

  result.estimate = std::move(est);
  result.augmented = std::move(aug);
  return result;
}

}  // namespace voi

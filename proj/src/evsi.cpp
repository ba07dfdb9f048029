#include "voikit/evsi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace voi {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::vector<double>> phi_columns(const PsaDataset& ds,
                                             const std::vector<std::string>& phi_names) {
  std::vector<std::vector<double>> cols;
  cols.reserve(phi_names.size());
  for (const auto& name : phi_names) cols.push_back(ds.parameter(name));
  return cols;
}

double sample_variance(const std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double acc = 0.0;
  for (double v : x) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(x.size() - 1);
}

double quantile_type7(std::vector<double> sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

// Incremental eta (conditional expected INB) from an augmented dataset:
// g(s, t) = eta(s, t) - eta(s, reference).
Matrix incremental_eta(const AugmentedPsaDataset& aug, std::size_t ref) {
  Matrix g(aug.eta.rows(), aug.eta.cols());
  for (std::size_t s = 0; s < g.rows(); ++s) {
    const double base = aug.eta.at(s, ref);
    for (std::size_t t = 0; t < g.cols(); ++t)
      g.at(s, t) = t == ref ? 0.0 : aug.eta.at(s, t) - base;
  }
  return g;
}

void attach_metamodel_diagnostics(VoiEstimate& est, const Metamodel& m, std::size_t strategy) {
  const std::string tag = "t" + std::to_string(strategy + 1);
  est.diagnostics.values["r_squared." + tag] = m.stats().r_squared;
  est.diagnostics.values["edf." + tag] = m.stats().effective_df;
  if (m.report().status == DiagnosticStatus::warn)
    est.diagnostics.warn("metamodel WARN for " + tag);
}

std::string describe_fail(std::size_t strategy, const MetamodelReport& rep) {
  std::ostringstream os;
  os << "metamodel diagnostics FAIL for strategy t" << strategy + 1 << ": residual-fitted corr "
     << rep.residual_fitted_corr << ", heteroscedasticity R^2 " << rep.het_r2;
  for (const auto& n : rep.notes) os << "; " << n;
  return os.str();
}

// The eta columns are only meaningful at the threshold they were built with.
void check_threshold_consistency(const AugmentedPsaDataset& aug, WtpThreshold lambda) {
  const NetBenefitMatrix nb = compute_net_benefit(aug.base, lambda);
  for (std::size_t s = 0; s < nb.values.rows(); ++s) {
    for (std::size_t t = 0; t < nb.values.cols(); ++t) {
      const double a = nb.values.at(s, t);
      const double b = aug.nmb.at(s, t);
      const double scale = std::max({1.0, std::abs(a), std::abs(b)});
      if (std::abs(a - b) > 1e-6 * scale)
        throw validation_error(
            "augmented dataset nmb columns disagree with the requested threshold; "
            "rebuild the augmented dataset at this lambda");
    }
  }
}

}  // namespace

void PosteriorMeanMatrix::validate() const {
  if (values.rows() < 2 || values.cols() < 2)
    throw argument_error("posterior mean matrix needs S >= 2 and T >= 2");
  if (reference >= values.cols()) throw argument_error("reference strategy out of range");
  for (std::size_t s = 0; s < values.rows(); ++s) {
    if (values.at(s, reference) != 0.0)
      throw validation_error("reference column of the posterior mean matrix must be zero");
    for (std::size_t t = 0; t < values.cols(); ++t)
      if (!std::isfinite(values.at(s, t)))
        throw validation_error("non-finite posterior mean at row " + std::to_string(s + 1));
  }
}

VoiEstimate evsi_from_posterior_means(const PosteriorMeanMatrix& mu) {
  mu.validate();
  VoiEstimate est;
  est.kind = VoiKind::evsi;
  est.method = "eq4";
  double se = 0.0;
  est.value = clamp_voi(max_gain_estimate(mu.values, &se), est.diagnostics);
  est.mc_se = se;
  return est;
}

// --- regression-based method ---

VoiEstimate evsi_rb(const PsaDataset& ds, const StudyDesign& design, WtpThreshold lambda,
                    std::uint64_t seed, const EvsiOptions& options) {
  design.validate();
  if (design.n_outcomes() > static_cast<std::size_t>(options.metamodel.max_dimension))
    throw dimension_error("regression-based EVSI with " + std::to_string(design.n_outcomes()) +
                          " outcomes exceeds the reliable limit of " +
                          std::to_string(options.metamodel.max_dimension) +
                          " (flexible regression struggles beyond five or six outcomes)");
  const std::vector<std::vector<double>> phi = phi_columns(ds, design.phi_names);
  const std::size_t S = ds.rows();
  const std::size_t T = ds.n_strategies();

  // Simulate one future dataset per PSA row and summarize it.
  std::vector<std::vector<double>> summaries(design.n_outcomes(), std::vector<double>(S));
  parallel_for(S, options.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> phi_row(phi.size());
    for (std::size_t s = begin; s < end; ++s) {
      for (std::size_t p = 0; p < phi.size(); ++p) phi_row[p] = phi[p][s];
      RngStream rng(seed, s, RngPurpose::future_data);
      const FutureDataset x = simulate_future_dataset(design, phi_row, rng);
      const SummaryStatistic w = summarize_dataset(design, x);
      for (std::size_t o = 0; o < w.values.size(); ++o) summaries[o][s] = w.values[o];
    }
  });

  const NetBenefitMatrix nb = compute_net_benefit(ds, lambda);
  const std::size_t ref = choose_reference_strategy(nb.values);
  const IncrementalNetBenefitMatrix inb = compute_incremental_net_benefit(nb, ref);

  VoiEstimate est;
  est.kind = VoiKind::evsi;
  est.method = "rb";
  est.design_n = design.sample_size;
  Matrix mu(S, T);
  for (std::size_t t = 0; t < T; ++t) {
    if (t == ref) continue;
    std::vector<double> response(S);
    for (std::size_t s = 0; s < S; ++s) response[s] = inb.values.at(s, t);
    const Metamodel m = fit_metamodel(summaries, response, options.metamodel);
    if (m.report().status == DiagnosticStatus::fail)
      throw estimation_error(describe_fail(t, m.report()));
    for (std::size_t s = 0; s < S; ++s) mu.at(s, t) = m.fitted()[s];
    attach_metamodel_diagnostics(est, m, t);
  }
  double se = 0.0;
  est.value = clamp_voi(max_gain_estimate(mu, &se), est.diagnostics);
  est.mc_se = se;
  return est;
}

// --- importance-sampling method ---

namespace {

// Per-PSA-row pieces of the log likelihood that do not depend on the simulated
// dataset; the s-constant normalizing terms cancel in the weights.
struct OutcomeLikelihoodTable {
  SamplingFamily family;
  bool links_variance = false;
  std::vector<double> log_phi;      // binomial: log p; poisson/exponential: log rate
  std::vector<double> log1m_phi;    // binomial only
  std::vector<double> phi;          // raw values
  std::vector<double> inv_phi;      // variance-link normal only
  double sigma2 = 1.0;
};

double table_log_likelihood(const OutcomeLikelihoodTable& tab, const OutcomeData& od, std::size_t r) {
  switch (tab.family) {
    case SamplingFamily::binomial: {
      double ll = 0.0;
      if (od.count > 0) ll += static_cast<double>(od.count) * tab.log_phi[r];
      if (od.count < od.n) ll += static_cast<double>(od.n - od.count) * tab.log1m_phi[r];
      return ll;
    }
    case SamplingFamily::normal_known_variance: {
      if (tab.links_variance) {
        const double v = tab.phi[r];
        if (v <= 0.0) return kNegInf;
        return -0.5 * static_cast<double>(od.n) * tab.log_phi[r] - 0.5 * od.sum_sq_dev() * tab.inv_phi[r];
      }
      const double p = tab.phi[r];
      return -0.5 * (od.sum_sq - 2.0 * p * od.sum + static_cast<double>(od.n) * p * p) / tab.sigma2;
    }
    case SamplingFamily::poisson: {
      const double rate = tab.phi[r];
      if (rate < 0.0) return kNegInf;
      if (rate == 0.0) return od.count == 0 ? 0.0 : kNegInf;
      return static_cast<double>(od.count) * tab.log_phi[r] - rate * od.total_exposure;
    }
    case SamplingFamily::exponential:
      return static_cast<double>(od.n) * tab.log_phi[r] - tab.phi[r] * od.sum;
  }
  return kNegInf;
}

}  // namespace

VoiEstimate evsi_is(const AugmentedPsaDataset& aug, const StudyDesign& design, WtpThreshold lambda,
                    std::uint64_t seed, const EvsiOptions& options) {
  design.validate();
  check_threshold_consistency(aug, lambda);
  const std::size_t S = aug.base.rows();
  const std::size_t T = aug.base.n_strategies();
  if (aug.eta.rows() != S || aug.eta.cols() != T)
    throw argument_error("augmented dataset eta dimensions do not match the base PSA");
  const std::size_t ref = aug.reference_strategy();
  const Matrix g = incremental_eta(aug, ref);
  const std::vector<std::vector<double>> phi = phi_columns(aug.base, design.phi_names);

  // Precompute the r-indexed transforms the likelihood needs.
  std::vector<OutcomeLikelihoodTable> tables(design.n_outcomes());
  for (std::size_t o = 0; o < design.n_outcomes(); ++o) {
    const OutcomeSpec& spec = design.outcomes[o];
    const std::size_t link =
        static_cast<std::size_t>(std::find(design.phi_names.begin(), design.phi_names.end(),
                                           spec.linked_parameter) -
                                 design.phi_names.begin());
    OutcomeLikelihoodTable& tab = tables[o];
    tab.family = spec.family;
    tab.links_variance = spec.links_variance;
    tab.sigma2 = spec.sigma2;
    tab.phi = phi[link];
    switch (spec.family) {
      case SamplingFamily::binomial:
        tab.log_phi.resize(S);
        tab.log1m_phi.resize(S);
        for (std::size_t r = 0; r < S; ++r) {
          tab.log_phi[r] = tab.phi[r] > 0.0 ? std::log(tab.phi[r]) : kNegInf;
          tab.log1m_phi[r] = tab.phi[r] < 1.0 ? std::log1p(-tab.phi[r]) : kNegInf;
        }
        break;
      case SamplingFamily::poisson:
      case SamplingFamily::exponential:
        tab.log_phi.resize(S);
        for (std::size_t r = 0; r < S; ++r)
          tab.log_phi[r] = tab.phi[r] > 0.0 ? std::log(tab.phi[r]) : kNegInf;
        break;
      case SamplingFamily::normal_known_variance:
        if (tab.links_variance) {
          tab.log_phi.resize(S);
          tab.inv_phi.resize(S);
          for (std::size_t r = 0; r < S; ++r) {
            tab.log_phi[r] = tab.phi[r] > 0.0 ? std::log(tab.phi[r]) : kNegInf;
            tab.inv_phi[r] = tab.phi[r] > 0.0 ? 1.0 / tab.phi[r] : 0.0;
          }
        }
        break;
    }
  }

  Matrix mu(S, T);
  std::vector<double> ess(S, 0.0);
  std::vector<double> weight_sum_error(S, 0.0);
  std::vector<int> degenerate(S, 0);
  parallel_for(S, options.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> phi_row(phi.size());
    std::vector<double> loglik(S);
    std::vector<double> weights(S);
    for (std::size_t s = begin; s < end; ++s) {
      for (std::size_t p = 0; p < phi.size(); ++p) phi_row[p] = phi[p][s];
      RngStream rng(seed, s, RngPurpose::future_data);
      const FutureDataset x = simulate_future_dataset(design, phi_row, rng);

      double max_ll = kNegInf;
      for (std::size_t r = 0; r < S; ++r) {
        double ll = 0.0;
        for (std::size_t o = 0; o < tables.size(); ++o) {
          ll += table_log_likelihood(tables[o], x.outcomes[o], r);
          if (ll == kNegInf) break;
        }
        loglik[r] = ll;
        max_ll = std::max(max_ll, ll);
      }
      if (max_ll == kNegInf) {
        degenerate[s] = 1;
        continue;
      }
      // Log-sum-exp normalization, then one renormalizing pass.
      double total = 0.0;
      for (std::size_t r = 0; r < S; ++r) {
        weights[r] = std::exp(loglik[r] - max_ll);
        total += weights[r];
      }
      double check = 0.0;
      for (std::size_t r = 0; r < S; ++r) {
        weights[r] /= total;
        check += weights[r];
      }
      double final_sum = 0.0;
      double sum_sq = 0.0;
      for (std::size_t r = 0; r < S; ++r) {
        weights[r] /= check;
        final_sum += weights[r];
        sum_sq += weights[r] * weights[r];
      }
      weight_sum_error[s] = std::abs(final_sum - 1.0);
      ess[s] = 1.0 / sum_sq;
      for (std::size_t t = 0; t < T; ++t) {
        if (t == ref) continue;
        double acc = 0.0;
        for (std::size_t r = 0; r < S; ++r) acc += weights[r] * g.at(r, t);
        mu.at(s, t) = acc;
      }
    }
  });

  for (std::size_t s = 0; s < S; ++s) {
    if (degenerate[s])
      throw degeneracy_error("importance weights underflowed for simulated dataset " +
                             std::to_string(s + 1) + " (sample size N = " +
                             std::to_string(design.sample_size) +
                             " is too large for the PSA sample)");
  }

  VoiEstimate est;
  est.kind = VoiKind::evsi;
  est.method = "is";
  est.design_n = design.sample_size;
  double se = 0.0;
  est.value = clamp_voi(max_gain_estimate(mu, &se), est.diagnostics);
  est.mc_se = se;

  std::vector<double> ess_sorted = ess;
  std::sort(ess_sorted.begin(), ess_sorted.end());
  const double median_ess = ess_sorted[S / 2];
  est.diagnostics.values["median_weight_ess"] = median_ess;
  est.diagnostics.values["min_weight_ess"] = ess_sorted.front();
  est.diagnostics.values["max_weight_sum_error"] =
      *std::max_element(weight_sum_error.begin(), weight_sum_error.end());
  if (median_ess < options.is_ess_warn_fraction * static_cast<double>(S))
    est.diagnostics.warn("importance weights are degenerate (median effective sample size " +
                         std::to_string(median_ess) + " of " + std::to_string(S) +
                         " rows); the likelihood concentrates as N grows");
  return est;
}

// --- Gaussian-approximation method ---

std::vector<VoiEstimate> evsi_ga(const PsaDataset& ds, const StudyDesign& design,
                                 const std::vector<EssEstimate>& ess, WtpThreshold lambda,
                                 const std::vector<long>& n_list, const EvsiOptions& options) {
  design.validate();
  if (n_list.empty()) throw argument_error("need at least one sample size N");
  if (design.phi_names.size() > static_cast<std::size_t>(options.metamodel.max_dimension))
    throw dimension_error("Gaussian-approximation EVSI supports at most " +
                          std::to_string(options.metamodel.max_dimension) + " phi components");
  std::vector<double> n0(design.phi_names.size(), 0.0);
  for (std::size_t p = 0; p < design.phi_names.size(); ++p) {
    const auto it = std::find_if(ess.begin(), ess.end(), [&](const EssEstimate& e) {
      return e.parameter == design.phi_names[p];
    });
    if (it == ess.end())
      throw argument_error("no prior effective sample size supplied for phi component '" +
                           design.phi_names[p] + "'");
    if (!(it->n0 > 0.0)) throw argument_error("prior effective sample size must be > 0");
    n0[p] = it->n0;
  }

  const std::vector<std::vector<double>> phi = phi_columns(ds, design.phi_names);
  const std::size_t S = ds.rows();
  const std::size_t T = ds.n_strategies();
  const NetBenefitMatrix nb = compute_net_benefit(ds, lambda);
  const std::size_t ref = choose_reference_strategy(nb.values);
  const IncrementalNetBenefitMatrix inb = compute_incremental_net_benefit(nb, ref);

  // Fit the INB-on-phi metamodels once; every N reuses them.
  std::vector<Metamodel> models;
  std::vector<std::size_t> model_strategy;
  for (std::size_t t = 0; t < T; ++t) {
    if (t == ref) continue;
    std::vector<double> response(S);
    for (std::size_t s = 0; s < S; ++s) response[s] = inb.values.at(s, t);
    Metamodel m = fit_metamodel(phi, response, options.metamodel);
    if (m.report().status == DiagnosticStatus::fail)
      throw estimation_error(describe_fail(t, m.report()));
    models.push_back(std::move(m));
    model_strategy.push_back(t);
  }

  std::vector<double> phi_mean(phi.size());
  for (std::size_t p = 0; p < phi.size(); ++p) {
    double acc = 0.0;
    for (double v : phi[p]) acc += v;
    phi_mean[p] = acc / static_cast<double>(S);
  }

  std::vector<VoiEstimate> results;
  for (long N : n_list) {
    if (N < 1) throw argument_error("sample sizes must be >= 1");
    std::vector<std::vector<double>> shrunk(phi.size());
    for (std::size_t p = 0; p < phi.size(); ++p) {
      const double w = static_cast<double>(N) / (static_cast<double>(N) + n0[p]);
      shrunk[p].resize(S);
      for (std::size_t s = 0; s < S; ++s)
        shrunk[p][s] = w * phi[p][s] + (1.0 - w) * phi_mean[p];
    }
    VoiEstimate est;
    est.kind = VoiKind::evsi;
    est.method = "ga";
    est.design_n = N;
    Matrix mu(S, T);
    std::size_t extrapolated = 0;
    for (std::size_t i = 0; i < models.size(); ++i) {
      const Metamodel::Prediction pred = models[i].predict_detail(shrunk);
      extrapolated += pred.extrapolated;
      for (std::size_t s = 0; s < S; ++s) mu.at(s, model_strategy[i]) = pred.values[s];
      attach_metamodel_diagnostics(est, models[i], model_strategy[i]);
    }
    est.diagnostics.values["extrapolated_points"] = static_cast<double>(extrapolated);
    double se = 0.0;
    est.value = clamp_voi(max_gain_estimate(mu, &se), est.diagnostics);
    est.mc_se = se;
    results.push_back(std::move(est));
  }
  return results;
}

// --- moment-matching method ---

VoiEstimate evsi_mm(const DecisionModel& model, const AugmentedPsaDataset& aug,
                    const StudyDesign& design, WtpThreshold lambda, int q_points,
                    std::uint64_t seed, const EvsiOptions& options, MmVarianceLedger* ledger_out) {
  design.validate();
  if (!(q_points > 30 && q_points < 50))
    throw argument_error("moment matching requires 30 < Q < 50, got Q = " + std::to_string(q_points));
  check_threshold_consistency(aug, lambda);
  const std::size_t S = aug.base.rows();
  const std::size_t T = aug.base.n_strategies();
  const std::size_t ref = aug.reference_strategy();
  const Matrix g = incremental_eta(aug, ref);
  const std::vector<std::vector<double>> phi = phi_columns(aug.base, design.phi_names);

  VoiEstimate est;
  est.kind = VoiKind::evsi;
  est.method = "mm";
  est.design_n = design.sample_size;
  if (design.sample_size < 10)
    est.diagnostics.warn("moment matching can be inaccurate for study sample sizes below 10");

  // Prior INB variance per strategy from the augmented dataset's NB columns.
  std::vector<double> prior_var(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    if (t == ref) continue;
    std::vector<double> inb(S);
    for (std::size_t s = 0; s < S; ++s) inb[s] = aug.nmb.at(s, t) - aug.nmb.at(s, ref);
    prior_var[t] = sample_variance(inb);
  }

  // Q phi points: quantiles of phi itself when scalar, otherwise the phi rows
  // ranked by the fitted INB of the strongest comparator.
  MmVarianceLedger ledger;
  ledger.quantile_levels.resize(static_cast<std::size_t>(q_points));
  ledger.phi_points.resize(static_cast<std::size_t>(q_points));
  const std::size_t Q = static_cast<std::size_t>(q_points);
  if (phi.size() == 1) {
    std::vector<double> sorted = phi[0];
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t q = 0; q < Q; ++q) {
      const double level = (static_cast<double>(q) + 0.5) / static_cast<double>(Q);
      ledger.quantile_levels[q] = level;
      ledger.phi_points[q] = {quantile_type7(sorted, level)};
    }
  } else {
    std::size_t best_comparator = ref == 0 ? 1 : 0;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < T; ++t) {
      if (t == ref) continue;
      const double m = g.column_mean(t);
      if (m > best_mean) {
        best_mean = m;
        best_comparator = t;
      }
    }
    std::vector<std::size_t> order(S);
    for (std::size_t s = 0; s < S; ++s) order[s] = s;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return g.at(a, best_comparator) < g.at(b, best_comparator);
    });
    for (std::size_t q = 0; q < Q; ++q) {
      const double level = (static_cast<double>(q) + 0.5) / static_cast<double>(Q);
      ledger.quantile_levels[q] = level;
      const std::size_t rank =
          std::min(S - 1, static_cast<std::size_t>(level * static_cast<double>(S)));
      std::vector<double> point(phi.size());
      for (std::size_t p = 0; p < phi.size(); ++p) point[p] = phi[p][order[rank]];
      ledger.phi_points[q] = std::move(point);
    }
  }

  // Per quantile: simulate data, update the phi posteriors, rerun the PSA and
  // record the posterior INB variance per strategy.
  ledger.sigma_q = Matrix(Q, T);
  const std::size_t P = model.parameters.size();
  std::vector<int> in_phi(P, -1);
  for (std::size_t p = 0; p < P; ++p) {
    const auto it = std::find(design.phi_names.begin(), design.phi_names.end(),
                              model.parameters[p].name);
    if (it != design.phi_names.end())
      in_phi[p] = static_cast<int>(it - design.phi_names.begin());
  }
  parallel_for(Q, options.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> theta(P), eff(T), cst(T);
    for (std::size_t q = begin; q < end; ++q) {
      RngStream data_rng(seed, q, RngPurpose::future_data);
      const FutureDataset x = simulate_future_dataset(design, ledger.phi_points[q], data_rng);
      const std::vector<PosteriorComponent> posterior =
          update_phi_posteriors(model, design, x, seed, q);
      Matrix inb_post(S, T);
      for (std::size_t s = 0; s < S; ++s) {
        RngStream rng(seed, (q << 32) | s, RngPurpose::quantile_psa);
        for (std::size_t p = 0; p < P; ++p) {
          theta[p] = in_phi[p] >= 0 ? posterior[static_cast<std::size_t>(in_phi[p])].draw(rng)
                                    : model.parameters[p].prior.sample(rng);
        }
        model.evaluate(theta, eff, cst);
        for (std::size_t t = 0; t < T; ++t) {
          if (!std::isfinite(eff[t]) || !std::isfinite(cst[t]))
            throw model_error("model produced a non-finite outcome during the quantile rerun");
        }
        const double nb_ref = lambda.lambda * eff[ref] - cst[ref];
        for (std::size_t t = 0; t < T; ++t)
          inb_post.at(s, t) = t == ref ? 0.0 : lambda.lambda * eff[t] - cst[t] - nb_ref;
      }
      for (std::size_t t = 0; t < T; ++t)
        ledger.sigma_q.at(q, t) = t == ref ? 0.0 : inb_post.column_variance(t);
    }
  });

  // Variance target and eta rescaling, per comparator.
  ledger.prior_variance = prior_var;
  ledger.target_variance.assign(T, 0.0);
  ledger.target_variance_pre_clamp.assign(T, 0.0);
  Matrix mu(S, T);
  double evppi_hat = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    if (t == ref) continue;
    double mean_sigma_q = 0.0;
    for (std::size_t q = 0; q < Q; ++q) mean_sigma_q += ledger.sigma_q.at(q, t);
    mean_sigma_q /= static_cast<double>(Q);
    const double raw = prior_var[t] - mean_sigma_q;
    ledger.target_variance_pre_clamp[t] = raw;
    const double target = std::max(0.0, raw);
    ledger.target_variance[t] = target;

    std::vector<double> col(S);
    for (std::size_t s = 0; s < S; ++s) col[s] = g.at(s, t);
    const double eta_var = sample_variance(col);
    double eta_mean = 0.0;
    for (double v : col) eta_mean += v;
    eta_mean /= static_cast<double>(S);
    if (eta_var <= 0.0) {
      if (target > 0.0)
        throw degeneracy_error("eta column t" + std::to_string(t + 1) +
                               " has zero variance but the data carry information (EVPPI degenerate)");
      for (std::size_t s = 0; s < S; ++s) mu.at(s, t) = eta_mean;
      continue;
    }
    const double factor = std::sqrt(target / eta_var);
    for (std::size_t s = 0; s < S; ++s) mu.at(s, t) = eta_mean + (g.at(s, t) - eta_mean) * factor;
  }

  // Advisory check from the method's limitations: EVPPI should carry a decent
  // share of EVPI for moment matching to be reliable.
  {
    const double evpi_hat = std::max(0.0, max_gain_estimate(aug.nmb, nullptr));
    evppi_hat = std::max(0.0, max_gain_estimate(g, nullptr));
    est.diagnostics.values["evppi_over_evpi"] = evpi_hat > 0.0 ? evppi_hat / evpi_hat : 1.0;
    if (evpi_hat > 0.0 && evppi_hat / evpi_hat < 0.4)
      est.diagnostics.warn("EVPPI is below 40% of EVPI; moment matching may be inaccurate here");
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (t == ref) continue;
    est.diagnostics.values["sigma2_pre_clamp.t" + std::to_string(t + 1)] =
        ledger.target_variance_pre_clamp[t];
  }

  double se = 0.0;
  est.value = clamp_voi(max_gain_estimate(mu, &se), est.diagnostics);
  est.mc_se = se;
  if (ledger_out) {
    ledger.rescaled_eta = std::move(mu);
    *ledger_out = std::move(ledger);
  }
  return est;
}

// --- nested Monte Carlo oracle ---

VoiEstimate evsi_oracle(const DecisionModel& model, const StudyDesign& design, WtpThreshold lambda,
                        std::size_t outer, std::size_t inner, std::uint64_t seed,
                        const EvsiOptions& options) {
  design.validate();
  VoiEstimate est;
  est.kind = VoiKind::evsi;
  est.method = "oracle";
  est.design_n = design.sample_size;
  if (design.sample_size == 0) {
    // No data: every posterior equals the prior, so the posterior-mean rows
    // coincide and the estimator is exactly zero.
    est.value = 0.0;
    est.mc_se = 0.0;
    est.diagnostics.warn("N = 0: posterior equals prior, EVSI is identically zero");
    return est;
  }
  if (outer < 100 || inner < 100) throw argument_error("oracle requires outer, inner >= 100");

  const std::size_t P = model.parameters.size();
  const std::size_t T = model.strategies.size();
  std::vector<int> in_phi(P, -1);
  for (std::size_t p = 0; p < P; ++p) {
    const auto it = std::find(design.phi_names.begin(), design.phi_names.end(),
                              model.parameters[p].name);
    if (it != design.phi_names.end())
      in_phi[p] = static_cast<int>(it - design.phi_names.begin());
  }
  for (const auto& name : design.phi_names) model.parameter_index(name);  // validate

  Matrix mu(outer, T);  // posterior-mean NB per strategy
  parallel_for(outer, options.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> theta(P), eff(T), cst(T), phi_row(design.phi_names.size());
    for (std::size_t o = begin; o < end; ++o) {
      RngStream outer_rng(seed, o, RngPurpose::oracle_outer);
      for (std::size_t p = 0; p < P; ++p) theta[p] = model.parameters[p].prior.sample(outer_rng);
      for (std::size_t p = 0; p < P; ++p)
        if (in_phi[p] >= 0) phi_row[static_cast<std::size_t>(in_phi[p])] = theta[p];
      const FutureDataset x = simulate_future_dataset(design, phi_row, outer_rng);
      const std::vector<PosteriorComponent> posterior =
          update_phi_posteriors(model, design, x, seed, o);

      std::vector<double> nb_sum(T, 0.0);
      RngStream inner_rng(seed, o, RngPurpose::oracle_inner);
      for (std::size_t i = 0; i < inner; ++i) {
        for (std::size_t p = 0; p < P; ++p) {
          theta[p] = in_phi[p] >= 0 ? posterior[static_cast<std::size_t>(in_phi[p])].draw(inner_rng)
                                    : model.parameters[p].prior.sample(inner_rng);
        }
        model.evaluate(theta, eff, cst);
        for (std::size_t t = 0; t < T; ++t) nb_sum[t] += lambda.lambda * eff[t] - cst[t];
      }
      for (std::size_t t = 0; t < T; ++t) {
        const double v = nb_sum[t] / static_cast<double>(inner);
        if (!std::isfinite(v))
          throw model_error("non-finite posterior mean net benefit at outer draw " +
                            std::to_string(o + 1));
        mu.at(o, t) = v;
      }
    }
  });

  double se = 0.0;
  est.value = clamp_voi(max_gain_estimate(mu, &se), est.diagnostics);
  est.mc_se = se;
  return est;
}

// --- serialization ---

std::string voi_estimates_to_json(const std::vector<VoiEstimate>& estimates) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : estimates) {
    nlohmann::json j;
    j["kind"] = to_string(e.kind);
    j["method"] = e.method;
    j["N"] = e.design_n ? nlohmann::json(*e.design_n) : nlohmann::json(nullptr);
    j["value"] = e.value;
    j["mc_se"] = e.mc_se ? nlohmann::json(*e.mc_se) : nlohmann::json(nullptr);
    nlohmann::json diag;
    for (const auto& [k, v] : e.diagnostics.values) diag[k] = v;
    diag["warnings"] = e.diagnostics.warnings;
    j["diagnostics"] = diag;
    out.push_back(std::move(j));
  }
  return out.dump(2) + "\n";
}

std::string voi_estimates_to_csv(const std::vector<VoiEstimate>& estimates) {
  std::ostringstream os;
  os << "method,N,evsi,se\n";
  for (const auto& e : estimates) {
    os << e.method << ',';
    if (e.design_n) os << *e.design_n;
    os << ',' << format_double(e.value) << ',';
    if (e.mc_se) os << format_double(*e.mc_se);
    os << '\n';
  }
  return os.str();
}

}  // namespace voi

#include <algorithm>
#include <cmath>
#include <limits>

#include "voikit/evsi.hpp"

namespace voi {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sample_variance(const std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double acc = 0.0;
  for (double v : x) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(x.size() - 1);
}

// A design restricted to the outcomes that inform one phi component.
StudyDesign pilot_design(const StudyDesign& design, const std::string& phi_name, long pilot_n,
                         bool first_outcome_only) {
  StudyDesign pilot;
  pilot.phi_names = {phi_name};
  pilot.sample_size = pilot_n;
  for (const auto& o : design.outcomes) {
    if (o.linked_parameter != phi_name) continue;
    pilot.outcomes.push_back(o);
    if (first_outcome_only) break;
  }
  if (pilot.outcomes.empty())
    throw argument_error("no study outcome links to phi component '" + phi_name + "'");
  return pilot;
}

}  // namespace

EssEstimate ess_direct(const ParameterSpec& prior, const OutcomeSpec& outcome) {
  prior.prior.validate();
  EssEstimate est;
  est.parameter = prior.name;
  est.method = "direct";
  const PriorFamily pf = prior.prior.family;
  const SamplingFamily sf = outcome.family;
  if (pf == PriorFamily::beta && sf == SamplingFamily::binomial) {
    est.n0 = prior.prior.a + prior.prior.b;
  } else if (pf == PriorFamily::gamma && sf == SamplingFamily::exponential) {
    est.n0 = prior.prior.a;
  } else if (pf == PriorFamily::gamma && sf == SamplingFamily::poisson) {
    // Table S3 lists 1/b with a scale-parameterized gamma; with our rate
    // parameterization the prior is worth b units of exposure.
    est.n0 = prior.prior.b;
  } else if (pf == PriorFamily::normal && sf == SamplingFamily::normal_known_variance &&
             !outcome.links_variance) {
    est.n0 = outcome.sigma2 / prior.prior.b;
  } else if (pf == PriorFamily::inverse_gamma && sf == SamplingFamily::normal_known_variance &&
             outcome.links_variance) {
    est.n0 = prior.prior.a;
  } else {
    throw estimation_error("no direct formula for a " + to_string(pf) + " prior with " +
                           to_string(sf) + " data; use the summary-statistic or posterior-mean method");
  }
  if (!(est.n0 > 0.0)) throw estimation_error("direct prior effective sample size is non-positive");
  return est;
}

EssEstimate ess_from_summary(const StudyDesign& design, const PsaDataset& ds,
                             const std::string& phi_name, long pilot_n, std::uint64_t seed,
                             int threads) {
  if (pilot_n < 2) throw argument_error("pilot sample size must be >= 2");
  const StudyDesign pilot = pilot_design(design, phi_name, pilot_n, /*first_outcome_only=*/true);
  const std::vector<double>& phi = ds.parameter(phi_name);
  const std::size_t S = ds.rows();

  std::vector<double> summary(S);
  parallel_for(S, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      RngStream rng(seed, s, RngPurpose::pilot_data);
      const double row_phi[1] = {phi[s]};
      const FutureDataset x = simulate_future_dataset(pilot, row_phi, rng);
      summary[s] = summarize_dataset(pilot, x).values[0];
    }
  });

  const double var_w = sample_variance(summary);
  const double var_phi = sample_variance(phi);
  if (!(var_phi > 0.0)) throw estimation_error("phi has zero variance in the PSA sample");
  const double ratio = var_w / var_phi;
  if (!(ratio > 1.0))
    throw estimation_error("Var(W) <= Var(phi) (ratio " + std::to_string(ratio) +
                           "); the summary statistic is not on phi's scale or the pilot is too large");
  EssEstimate est;
  est.parameter = phi_name;
  est.method = "summary";
  est.n0 = static_cast<double>(pilot_n) * (ratio - 1.0);
  if (!(est.n0 > 0.0)) throw estimation_error("summary-statistic prior effective sample size is non-positive");
  return est;
}

EssEstimate ess_from_posterior_means(const StudyDesign& design, const PsaDataset& ds,
                                     const std::string& phi_name, long pilot_n, std::uint64_t seed,
                                     int threads, const ParameterSpec* prior) {
  if (pilot_n < 1) throw argument_error("pilot sample size must be >= 1");
  const StudyDesign pilot = pilot_design(design, phi_name, pilot_n, /*first_outcome_only=*/false);
  const std::vector<double>& phi = ds.parameter(phi_name);
  const std::size_t S = ds.rows();

  // The per-row posterior mean ladder: conjugate updates when the prior is
  // known and every linked outcome pairs with it, else self-normalized
  // importance weights over the PSA rows, else Metropolis on the prior.
  bool use_conjugate = prior != nullptr;
  if (prior) {
    for (const auto& o : pilot.outcomes)
      use_conjugate = use_conjugate && has_conjugate_update(prior->prior.family, o.family);
  }

  std::vector<double> posterior_mean(S);
  parallel_for(S, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> loglik(S);
    for (std::size_t s = begin; s < end; ++s) {
      RngStream rng(seed, s, RngPurpose::pilot_data);
      const double row_phi[1] = {phi[s]};
      const FutureDataset x = simulate_future_dataset(pilot, row_phi, rng);
      if (use_conjugate) {
        posterior_mean[s] = conjugate_update(*prior, pilot, x).prior.mean();
        continue;
      }
      double max_ll = kNegInf;
      for (std::size_t r = 0; r < S; ++r) {
        const double cand[1] = {phi[r]};
        loglik[r] = log_likelihood(pilot, x, cand);
        max_ll = std::max(max_ll, loglik[r]);
      }
      if (max_ll > kNegInf) {
        double total = 0.0, weighted = 0.0, sum_sq = 0.0;
        for (std::size_t r = 0; r < S; ++r) {
          const double w = std::exp(loglik[r] - max_ll);
          total += w;
          weighted += w * phi[r];
          sum_sq += w * w;
        }
        const double ess_weights = total * total / sum_sq;
        if (ess_weights >= 10.0) {
          posterior_mean[s] = weighted / total;
          continue;
        }
      }
      // Degenerate weights: fall back to Metropolis when a prior is at hand.
      if (!prior)
        throw degeneracy_error(
            "importance weights underflowed during the posterior-mean pilot and no prior was "
            "supplied for the Metropolis fallback");
      auto ll = [&](double value) {
        const double cand[1] = {value};
        return log_likelihood(pilot, x, cand);
      };
      RngStream mcmc_rng(seed, s, RngPurpose::metropolis);
      const std::vector<double> chain =
          metropolis_posterior_sample(prior->prior, ll, 5000, 1000, mcmc_rng);
      double acc = 0.0;
      for (double v : chain) acc += v;
      posterior_mean[s] = acc / static_cast<double>(chain.size());
    }
  });

  const double var_mu = sample_variance(posterior_mean);
  const double var_phi = sample_variance(phi);
  if (!(var_phi > 0.0)) throw estimation_error("phi has zero variance in the PSA sample");
  if (!(var_mu > 0.0) || var_mu >= var_phi)
    throw estimation_error(
        "Var(posterior means) >= Var(phi); posterior means cannot be more dispersed than the prior");
  EssEstimate est;
  est.parameter = phi_name;
  est.method = "posterior-mean";
  est.n0 = static_cast<double>(pilot_n) * (var_phi / var_mu - 1.0);
  if (!(est.n0 > 0.0))
    throw estimation_error("posterior-mean prior effective sample size is non-positive");
  if (est.n0 < 1.0)
    est.warnings.push_back("weak prior: effective sample size below one observation");
  return est;
}

}  // namespace voi

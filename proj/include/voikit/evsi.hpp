#ifndef VOIKIT_EVSI_HPP
#define VOIKIT_EVSI_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "voikit/evppi.hpp"
#include "voikit/metamodel.hpp"
#include "voikit/model.hpp"
#include "voikit/psa.hpp"

namespace voi {

// Posterior means of incremental net benefit, mu_t(X_s), reference column zero.
struct PosteriorMeanMatrix {
  Matrix values;  // S x T
  std::size_t reference = 0;

  void validate() const;
};

struct EssEstimate {
  std::string parameter;
  double n0 = 0.0;  // > 0
  std::string method;  // "direct", "summary", "posterior-mean"
  std::vector<std::string> warnings;
};

// Moment-matching bookkeeping: the quantile points, the per-quantile posterior
// INB variances, and the variance targets per strategy.
struct MmVarianceLedger {
  std::vector<double> quantile_levels;
  std::vector<std::vector<double>> phi_points;    // Q rows of phi values
  Matrix sigma_q;                                 // Q x T posterior INB variances
  std::vector<double> prior_variance;             // per strategy, Var(INB_t)
  std::vector<double> target_variance;            // per strategy, clamped at 0
  std::vector<double> target_variance_pre_clamp;  // per strategy
  Matrix rescaled_eta;                            // S x T, the mu fed into Eq. (4)
};

struct EvsiOptions {
  MetamodelConfig metamodel;
  int threads = 0;
  // IS: warn when median effective sample size drops below this share of S.
  double is_ess_warn_fraction = 0.01;
};

// The expected-max-gain estimator on posterior means (the shared final step of
// every EVSI method).
VoiEstimate evsi_from_posterior_means(const PosteriorMeanMatrix& mu);

// Regression-based method: simulate a dataset per PSA row, summarize, regress
// INB on the summaries, and treat the fitted values as posterior means.
VoiEstimate evsi_rb(const PsaDataset& ds, const StudyDesign& design, WtpThreshold lambda,
                    std::uint64_t seed, const EvsiOptions& options = {});

// Importance-sampling method over the augmented dataset's eta columns.
VoiEstimate evsi_is(const AugmentedPsaDataset& aug, const StudyDesign& design, WtpThreshold lambda,
                    std::uint64_t seed, const EvsiOptions& options = {});

// Gaussian-approximation method: fit INB on phi once, then rescale phi toward
// its mean by N/(N + n0) per component and predict. One estimate per N, the
// fitted metamodels shared across the whole N list.
std::vector<VoiEstimate> evsi_ga(const PsaDataset& ds, const StudyDesign& design,
                                 const std::vector<EssEstimate>& ess, WtpThreshold lambda,
                                 const std::vector<long>& n_list, const EvsiOptions& options = {});

// Moment-matching method: Q quantile-conditioned Bayesian updates and PSA
// reruns give a posterior variance target; eta is rescaled to match it.
VoiEstimate evsi_mm(const DecisionModel& model, const AugmentedPsaDataset& aug,
                    const StudyDesign& design, WtpThreshold lambda, int q_points,
                    std::uint64_t seed, const EvsiOptions& options = {},
                    MmVarianceLedger* ledger_out = nullptr);

// Nested Monte Carlo baseline: outer loop over simulated datasets, inner loop
// over posterior parameter draws with full model re-evaluation.
VoiEstimate evsi_oracle(const DecisionModel& model, const StudyDesign& design, WtpThreshold lambda,
                        std::size_t outer, std::size_t inner, std::uint64_t seed,
                        const EvsiOptions& options = {});

// --- prior effective sample size ---

// Closed-form n0 from the prior's hyperparameters for the conjugate pairs of
// Table S3 (gamma distributions rate-parameterized; see README).
EssEstimate ess_direct(const ParameterSpec& prior, const OutcomeSpec& outcome);

// n0 = n * (Var(W) / Var(phi) - 1) from pilot datasets of size n simulated at
// each PSA row. The summary must sit on phi's scale.
EssEstimate ess_from_summary(const StudyDesign& design, const PsaDataset& ds,
                             const std::string& phi_name, long pilot_n, std::uint64_t seed,
                             int threads = 0);

// n0 = n * (Var(phi) / Var(mu_phi) - 1) from per-row posterior means; conjugate
// updates when the prior is supplied and pairs with every linked outcome,
// otherwise self-normalized importance weights over the PSA rows, otherwise
// Metropolis on the supplied prior.
EssEstimate ess_from_posterior_means(const StudyDesign& design, const PsaDataset& ds,
                                     const std::string& phi_name, long pilot_n, std::uint64_t seed,
                                     int threads = 0, const ParameterSpec* prior = nullptr);

// --- result serialization (External Interfaces) ---

std::string voi_estimates_to_json(const std::vector<VoiEstimate>& estimates);
std::string voi_estimates_to_csv(const std::vector<VoiEstimate>& estimates);

}  // namespace voi

#endif  // VOIKIT_EVSI_HPP

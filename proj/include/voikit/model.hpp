#ifndef VOIKIT_MODEL_HPP
#define VOIKIT_MODEL_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "voikit/psa.hpp"
#include "voikit/rng.hpp"

namespace voi {

enum class PriorFamily { beta, gamma, normal, inverse_gamma, log_normal };

// Two-hyperparameter prior. Conventions: beta(a, b); gamma(shape a, rate b);
// normal(mean a, variance b); inverse_gamma(shape a, scale b);
// log_normal(mu a, sigma^2 b).
struct PriorDistribution {
  PriorFamily family = PriorFamily::normal;
  double a = 0.0;
  double b = 1.0;

  double mean() const;
  double variance() const;
  double sample(RngStream& rng) const;
  double log_pdf(double x) const;
  bool in_support(double x) const;
  void validate() const;
};

std::string to_string(PriorFamily family);

struct ParameterSpec {
  std::string name;
  PriorDistribution prior;
};

enum class SamplingFamily { binomial, normal_known_variance, poisson, exponential };

std::string to_string(SamplingFamily family);

// One collected outcome of a proposed study, linked to a single phi component.
// A normal outcome usually observes the linked parameter as its mean with known
// variance sigma2; with links_variance set, phi is the sampling variance around
// the known mean instead (the InverseGamma conjugate case).
struct OutcomeSpec {
  std::string name;
  SamplingFamily family = SamplingFamily::binomial;
  std::string linked_parameter;
  double sigma2 = 1.0;       // normal_known_variance, mean link
  double exposure = 1.0;     // poisson: exposure per participant
  bool links_variance = false;
  double known_mean = 0.0;   // normal_known_variance, variance link
};

struct StudyDesign {
  std::vector<std::string> phi_names;
  std::vector<OutcomeSpec> outcomes;
  long sample_size = 0;  // N participants; 0 is the degenerate no-data design

  std::size_t n_outcomes() const { return outcomes.size(); }
  StudyDesign with_sample_size(long n) const;
  void validate() const;
};

// Raw data for one simulated outcome. Counts are the raw data for the discrete
// families; real observations are kept for the continuous ones, with sufficient
// statistics cached for O(1) likelihood evaluation.
struct OutcomeData {
  SamplingFamily family = SamplingFamily::binomial;
  long n = 0;
  long count = 0;                  // binomial successes / poisson events
  double total_exposure = 0.0;     // poisson
  double sigma2 = 1.0;             // normal_known_variance, mean link
  bool links_variance = false;
  double known_mean = 0.0;
  std::vector<double> observations;  // normal / exponential
  double sum = 0.0;
  double sum_sq = 0.0;

  // Sum of squared deviations from the known mean (variance-link normal data).
  double sum_sq_dev() const {
    return sum_sq - 2.0 * known_mean * sum + static_cast<double>(n) * known_mean * known_mean;
  }
};

struct FutureDataset {
  std::vector<OutcomeData> outcomes;
  std::vector<double> phi_used;  // the phi values that generated the data
};

struct SummaryStatistic {
  std::vector<double> values;       // one per outcome, on the linked phi's scale
  std::vector<std::string> scales;  // "proportion", "mean", "rate"
};

// Decision-analytic model: pure mapping theta -> per-strategy (effect, cost).
struct DecisionModel {
  std::vector<ParameterSpec> parameters;
  std::vector<Strategy> strategies;
  std::function<void(std::span<const double> theta, std::span<double> effects, std::span<double> costs)>
      evaluate;

  std::size_t parameter_index(const std::string& name) const;
  const ParameterSpec& parameter(const std::string& name) const;
};

// --- operations ---

PsaDataset run_psa(const DecisionModel& model, std::size_t s_draws, std::uint64_t seed,
                   int threads = 0);

FutureDataset simulate_future_dataset(const StudyDesign& design, std::span<const double> phi,
                                      std::uint64_t seed);
FutureDataset simulate_future_dataset(const StudyDesign& design, std::span<const double> phi,
                                      RngStream& rng);

SummaryStatistic summarize_dataset(const StudyDesign& design, const FutureDataset& x);

double log_likelihood(const StudyDesign& design, const FutureDataset& x, std::span<const double> phi);

// Conjugate posterior for every outcome in the design that links to the prior's
// parameter; unlinked priors pass through unchanged. Throws when a linked
// (prior, sampling) pair has no conjugate form.
ParameterSpec conjugate_update(const ParameterSpec& prior, const StudyDesign& design,
                               const FutureDataset& x);

bool has_conjugate_update(PriorFamily prior, SamplingFamily sampling);

// Posterior for one phi component: either a closed-form updated prior or an
// empirical Metropolis sample.
struct PosteriorComponent {
  std::string name;
  std::variant<PriorDistribution, std::vector<double>> posterior;

  bool conjugate() const { return std::holds_alternative<PriorDistribution>(posterior); }
  double mean() const;
  double draw(RngStream& rng) const;
};

// Updates every phi component of the design given simulated data x. Conjugate
// pairs update in closed form; the rest fall back to the Metropolis sampler.
std::vector<PosteriorComponent> update_phi_posteriors(const DecisionModel& model,
                                                      const StudyDesign& design,
                                                      const FutureDataset& x, std::uint64_t seed,
                                                      std::uint64_t stream);

// Gaussian random-walk Metropolis on an unconstrained transform of the prior's
// support. Step size tuned to 20-40% acceptance during burn-in. Returns the
// post burn-in chain.
std::vector<double> metropolis_posterior_sample(const PriorDistribution& prior,
                                                const std::function<double(double)>& log_lik,
                                                std::size_t iters, std::size_t burn_in,
                                                RngStream& rng);

// --- built-in example models ---

struct BuiltinModel {
  DecisionModel model;
  StudyDesign default_design;
  double default_lambda = 20000.0;
};

// phi ~ Normal, psi ~ Normal, INB linear in phi; closed-form EVPI/EVPPI/EVSI.
BuiltinModel make_linear_normal_model();
// p ~ Beta with binomial study data; EVPPI/EVPI engineered above 0.4.
BuiltinModel make_beta_binomial_model();
// event rate ~ Gamma with exponential study data.
BuiltinModel make_gamma_exponential_model();
// Three-strategy recurrence/toxicity cohort model with Table S1-style columns.
BuiltinModel make_dr_tox_model();

BuiltinModel make_builtin_model(const std::string& name);
std::vector<std::string> builtin_model_names();

}  // namespace voi

#endif  // VOIKIT_MODEL_HPP

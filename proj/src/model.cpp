#include "voikit/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

namespace voi {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

// --- PriorDistribution ---

void PriorDistribution::validate() const {
  const bool ok = std::isfinite(a) && std::isfinite(b);
  switch (family) {
    case PriorFamily::beta:
    case PriorFamily::gamma:
    case PriorFamily::inverse_gamma:
      if (!ok || a <= 0.0 || b <= 0.0) throw validation_error(to_string(family) + " requires a > 0 and b > 0");
      break;
    case PriorFamily::normal:
      if (!ok || b <= 0.0) throw validation_error("normal requires variance > 0");
      break;
    case PriorFamily::log_normal:
      if (!ok || b <= 0.0) throw validation_error("log_normal requires sigma^2 > 0");
      break;
  }
}

double PriorDistribution::mean() const {
  switch (family) {
    case PriorFamily::beta: return a / (a + b);
    case PriorFamily::gamma: return a / b;
    case PriorFamily::normal: return a;
    case PriorFamily::inverse_gamma: return a > 1.0 ? b / (a - 1.0) : std::numeric_limits<double>::quiet_NaN();
    case PriorFamily::log_normal: return std::exp(a + 0.5 * b);
  }
  return 0.0;
}

double PriorDistribution::variance() const {
  switch (family) {
    case PriorFamily::beta: {
      const double n = a + b;
      return a * b / (n * n * (n + 1.0));
    }
    case PriorFamily::gamma: return a / (b * b);
    case PriorFamily::normal: return b;
    case PriorFamily::inverse_gamma:
      return a > 2.0 ? b * b / ((a - 1.0) * (a - 1.0) * (a - 2.0))
                     : std::numeric_limits<double>::quiet_NaN();
    case PriorFamily::log_normal: return (std::exp(b) - 1.0) * std::exp(2.0 * a + b);
  }
  return 0.0;
}

double PriorDistribution::sample(RngStream& rng) const {
  switch (family) {
    case PriorFamily::beta: return rng.beta(a, b);
    case PriorFamily::gamma: return rng.gamma(a, b);
    case PriorFamily::normal: return rng.normal(a, b);
    case PriorFamily::inverse_gamma: return rng.inverse_gamma(a, b);
    case PriorFamily::log_normal: return rng.lognormal(a, b);
  }
  return 0.0;
}

double PriorDistribution::log_pdf(double x) const {
  switch (family) {
    case PriorFamily::beta:
      if (x <= 0.0 || x >= 1.0) return kNegInf;
      return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) + std::lgamma(a + b) -
             std::lgamma(a) - std::lgamma(b);
    case PriorFamily::gamma:
      if (x <= 0.0) return kNegInf;
      return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(x) - b * x;
    case PriorFamily::normal: {
      const double d = x - a;
      return -0.5 * std::log(6.283185307179586 * b) - 0.5 * d * d / b;
    }
    case PriorFamily::inverse_gamma:
      if (x <= 0.0) return kNegInf;
      return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
    case PriorFamily::log_normal: {
      if (x <= 0.0) return kNegInf;
      const double d = std::log(x) - a;
      return -std::log(x) - 0.5 * std::log(6.283185307179586 * b) - 0.5 * d * d / b;
    }
  }
  return kNegInf;
}

bool PriorDistribution::in_support(double x) const {
  switch (family) {
    case PriorFamily::beta: return x >= 0.0 && x <= 1.0;
    case PriorFamily::gamma:
    case PriorFamily::inverse_gamma:
    case PriorFamily::log_normal: return x > 0.0;
    case PriorFamily::normal: return std::isfinite(x);
  }
  return false;
}

std::string to_string(PriorFamily family) {
  switch (family) {
    case PriorFamily::beta: return "beta";
    case PriorFamily::gamma: return "gamma";
    case PriorFamily::normal: return "normal";
    case PriorFamily::inverse_gamma: return "invgamma";
    case PriorFamily::log_normal: return "lognormal";
  }
  return "?";
}

std::string to_string(SamplingFamily family) {
  switch (family) {
    case SamplingFamily::binomial: return "binomial";
    case SamplingFamily::normal_known_variance: return "normal";
    case SamplingFamily::poisson: return "poisson";
    case SamplingFamily::exponential: return "exponential";
  }
  return "?";
}

// --- StudyDesign ---

StudyDesign StudyDesign::with_sample_size(long n) const {
  StudyDesign d = *this;
  d.sample_size = n;
  return d;
}

void StudyDesign::validate() const {
  if (phi_names.empty()) throw validation_error("study design needs a non-empty phi set");
  if (outcomes.empty()) throw validation_error("study design needs at least one outcome");
  if (sample_size < 0) throw validation_error("sample size must be >= 0");
  for (const auto& o : outcomes) {
    if (std::find(phi_names.begin(), phi_names.end(), o.linked_parameter) == phi_names.end())
      throw validation_error("outcome '" + o.name + "' links to '" + o.linked_parameter +
                             "' which is not in phi");
    if (o.family == SamplingFamily::normal_known_variance && o.sigma2 <= 0.0)
      throw validation_error("outcome '" + o.name + "' needs sigma^2 > 0");
    if (o.family == SamplingFamily::poisson && o.exposure <= 0.0)
      throw validation_error("outcome '" + o.name + "' needs exposure > 0");
  }
}

// --- DecisionModel ---

std::size_t DecisionModel::parameter_index(const std::string& name) const {
  for (std::size_t p = 0; p < parameters.size(); ++p)
    if (parameters[p].name == name) return p;
  throw argument_error("unknown model parameter '" + name + "'");
}

const ParameterSpec& DecisionModel::parameter(const std::string& name) const {
  return parameters[parameter_index(name)];
}

// --- run_psa ---

PsaDataset run_psa(const DecisionModel& model, std::size_t s_draws, std::uint64_t seed, int threads) {
  if (s_draws < 2) throw argument_error("S >= 2 required");
  const std::size_t P = model.parameters.size();
  const std::size_t T = model.strategies.size();
  std::vector<std::vector<double>> params(P, std::vector<double>(s_draws));
  std::vector<std::vector<double>> effects(T, std::vector<double>(s_draws));
  std::vector<std::vector<double>> costs(T, std::vector<double>(s_draws));
  std::vector<std::string> error_row;  // first failure message, if any
  std::mutex err_mutex;

  parallel_for(s_draws, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> theta(P), eff(T), cst(T);
    for (std::size_t s = begin; s < end; ++s) {
      RngStream rng(seed, s, RngPurpose::psa_draw);
      for (std::size_t p = 0; p < P; ++p) theta[p] = model.parameters[p].prior.sample(rng);
      model.evaluate(theta, eff, cst);
      bool finite = true;
      for (std::size_t t = 0; t < T; ++t)
        finite = finite && std::isfinite(eff[t]) && std::isfinite(cst[t]);
      if (!finite) {
        std::lock_guard<std::mutex> lock(err_mutex);
        error_row.push_back("model produced a non-finite outcome at draw " + std::to_string(s + 1));
        return;
      }
      for (std::size_t p = 0; p < P; ++p) params[p][s] = theta[p];
      for (std::size_t t = 0; t < T; ++t) {
        effects[t][s] = eff[t];
        costs[t][s] = cst[t];
      }
    }
  });
  if (!error_row.empty()) throw model_error(error_row.front());

  std::vector<std::string> names;
  names.reserve(P);
  for (const auto& p : model.parameters) names.push_back(p.name);
  return PsaDataset(std::move(names), model.strategies, std::move(params), std::move(effects),
                    std::move(costs));
}

// --- future data simulation ---

FutureDataset simulate_future_dataset(const StudyDesign& design, std::span<const double> phi,
                                      std::uint64_t seed) {
  RngStream rng(seed, 0, RngPurpose::future_data);
  return simulate_future_dataset(design, phi, rng);
}

FutureDataset simulate_future_dataset(const StudyDesign& design, std::span<const double> phi,
                                      RngStream& rng) {
  design.validate();
  if (phi.size() != design.phi_names.size())
    throw argument_error("phi values do not match the design's phi set");
  FutureDataset data;
  data.phi_used.assign(phi.begin(), phi.end());
  const long n = design.sample_size;
  for (const auto& spec : design.outcomes) {
    const std::size_t link =
        static_cast<std::size_t>(std::find(design.phi_names.begin(), design.phi_names.end(),
                                           spec.linked_parameter) -
                                 design.phi_names.begin());
    const double value = phi[link];
    OutcomeData od;
    od.family = spec.family;
    od.n = n;
    od.sigma2 = spec.sigma2;
    od.links_variance = spec.links_variance;
    od.known_mean = spec.known_mean;
    switch (spec.family) {
      case SamplingFamily::binomial:
        if (value < 0.0 || value > 1.0)
          throw domain_error("binomial outcome '" + spec.name + "' needs phi in [0, 1], got " +
                             std::to_string(value));
        od.count = rng.binomial(n, value);
        break;
      case SamplingFamily::normal_known_variance: {
        if (!std::isfinite(value)) throw domain_error("normal outcome needs finite phi");
        if (spec.links_variance && value <= 0.0)
          throw domain_error("variance-link normal outcome needs phi > 0");
        const double mean = spec.links_variance ? spec.known_mean : value;
        const double var = spec.links_variance ? value : spec.sigma2;
        od.observations.resize(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) {
          const double x = rng.normal(mean, var);
          od.observations[static_cast<std::size_t>(i)] = x;
          od.sum += x;
          od.sum_sq += x * x;
        }
        break;
      }
      case SamplingFamily::poisson:
        if (value < 0.0) throw domain_error("poisson outcome needs phi >= 0");
        od.total_exposure = spec.exposure * static_cast<double>(n);
        od.count = rng.poisson(value * od.total_exposure);
        break;
      case SamplingFamily::exponential:
        if (value <= 0.0) throw domain_error("exponential outcome needs phi > 0");
        od.observations.resize(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) {
          const double x = rng.exponential(value);
          od.observations[static_cast<std::size_t>(i)] = x;
          od.sum += x;
          od.sum_sq += x * x;
        }
        break;
    }
    data.outcomes.push_back(std::move(od));
  }
  return data;
}

SummaryStatistic summarize_dataset(const StudyDesign& design, const FutureDataset& x) {
  if (x.outcomes.size() != design.outcomes.size())
    throw argument_error("dataset does not conform to the design");
  SummaryStatistic w;
  for (const auto& od : x.outcomes) {
    if (od.n == 0) throw argument_error("cannot summarize an empty dataset");
    switch (od.family) {
      case SamplingFamily::binomial:
        w.values.push_back(static_cast<double>(od.count) / static_cast<double>(od.n));
        w.scales.push_back("proportion");
        break;
      case SamplingFamily::normal_known_variance:
        if (od.links_variance) {
          w.values.push_back(od.sum_sq_dev() / static_cast<double>(od.n));
          w.scales.push_back("variance");
        } else {
          w.values.push_back(od.sum / static_cast<double>(od.n));
          w.scales.push_back("mean");
        }
        break;
      case SamplingFamily::poisson:
        w.values.push_back(static_cast<double>(od.count) / od.total_exposure);
        w.scales.push_back("rate");
        break;
      case SamplingFamily::exponential:
        // 1 / sample mean puts the summary on the rate scale of phi.
        w.values.push_back(static_cast<double>(od.n) / od.sum);
        w.scales.push_back("rate");
        break;
    }
  }
  return w;
}

namespace {

double log_choose(long n, long k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

double outcome_log_likelihood(const OutcomeData& od, double value) {
  switch (od.family) {
    case SamplingFamily::binomial: {
      if (value < 0.0 || value > 1.0) return kNegInf;
      if (od.n == 0) return 0.0;
      double ll = log_choose(od.n, od.count);
      ll += od.count == 0 ? 0.0 : static_cast<double>(od.count) * std::log(value);
      ll += od.count == od.n ? 0.0 : static_cast<double>(od.n - od.count) * std::log1p(-value);
      return std::isnan(ll) ? kNegInf : ll;
    }
    case SamplingFamily::normal_known_variance: {
      if (!std::isfinite(value)) return kNegInf;
      const double n = static_cast<double>(od.n);
      if (od.n == 0) return 0.0;
      if (od.links_variance) {
        if (value <= 0.0) return kNegInf;
        return -0.5 * n * std::log(6.283185307179586 * value) - 0.5 * od.sum_sq_dev() / value;
      }
      return -0.5 * n * std::log(6.283185307179586 * od.sigma2) -
             0.5 * (od.sum_sq - 2.0 * value * od.sum + n * value * value) / od.sigma2;
    }
    case SamplingFamily::poisson: {
      if (value < 0.0) return kNegInf;
      if (od.n == 0) return 0.0;
      if (value == 0.0) return od.count == 0 ? 0.0 : kNegInf;
      const double mu = value * od.total_exposure;
      return static_cast<double>(od.count) * std::log(mu) - mu -
             std::lgamma(static_cast<double>(od.count) + 1.0);
    }
    case SamplingFamily::exponential: {
      if (value <= 0.0) return kNegInf;
      if (od.n == 0) return 0.0;
      return static_cast<double>(od.n) * std::log(value) - value * od.sum;
    }
  }
  return kNegInf;
}

}  // namespace

double log_likelihood(const StudyDesign& design, const FutureDataset& x, std::span<const double> phi) {
  if (phi.size() != design.phi_names.size() || x.outcomes.size() != design.outcomes.size())
    throw argument_error("phi/dataset dimensions do not match the design");
  double total = 0.0;
  for (std::size_t i = 0; i < design.outcomes.size(); ++i) {
    const std::size_t link =
        static_cast<std::size_t>(std::find(design.phi_names.begin(), design.phi_names.end(),
                                           design.outcomes[i].linked_parameter) -
                                 design.phi_names.begin());
    total += outcome_log_likelihood(x.outcomes[i], phi[link]);
    if (total == kNegInf) return kNegInf;
  }
  return total;
}

// --- conjugate updating ---

bool has_conjugate_update(PriorFamily prior, SamplingFamily sampling) {
  switch (prior) {
    case PriorFamily::beta: return sampling == SamplingFamily::binomial;
    case PriorFamily::gamma:
      return sampling == SamplingFamily::exponential || sampling == SamplingFamily::poisson;
    case PriorFamily::normal: return sampling == SamplingFamily::normal_known_variance;
    case PriorFamily::inverse_gamma: return sampling == SamplingFamily::normal_known_variance;
    case PriorFamily::log_normal: return false;
  }
  return false;
}

namespace {

bool conjugate_pair(const PriorDistribution& prior, const OutcomeSpec& outcome) {
  if (!has_conjugate_update(prior.family, outcome.family)) return false;
  if (outcome.family != SamplingFamily::normal_known_variance) return true;
  // The normal data family is conjugate to a normal prior on the mean or an
  // inverse-gamma prior on the variance, depending on the link role.
  return outcome.links_variance ? prior.family == PriorFamily::inverse_gamma
                                : prior.family == PriorFamily::normal;
}

}  // namespace

namespace {

PriorDistribution conjugate_update_single(const PriorDistribution& prior, const OutcomeData& od) {
  if (od.n == 0) return prior;
  PriorDistribution post = prior;
  switch (prior.family) {
    case PriorFamily::beta:
      if (od.family != SamplingFamily::binomial) break;
      post.a = prior.a + static_cast<double>(od.count);
      post.b = prior.b + static_cast<double>(od.n - od.count);
      return post;
    case PriorFamily::gamma:
      if (od.family == SamplingFamily::exponential) {
        post.a = prior.a + static_cast<double>(od.n);
        post.b = prior.b + od.sum;
        return post;
      }
      if (od.family == SamplingFamily::poisson) {
        post.a = prior.a + static_cast<double>(od.count);
        post.b = prior.b + od.total_exposure;
        return post;
      }
      break;
    case PriorFamily::normal:
      if (od.family != SamplingFamily::normal_known_variance || od.links_variance) break;
      {
        const double prec = 1.0 / prior.b + static_cast<double>(od.n) / od.sigma2;
        post.b = 1.0 / prec;
        post.a = post.b * (prior.a / prior.b + od.sum / od.sigma2);
        return post;
      }
    case PriorFamily::inverse_gamma:
      // Variance of a normal with known mean.
      if (od.family != SamplingFamily::normal_known_variance || !od.links_variance) break;
      post.a = prior.a + 0.5 * static_cast<double>(od.n);
      post.b = prior.b + 0.5 * od.sum_sq_dev();
      return post;
    case PriorFamily::log_normal: break;
  }
  throw numeric_error("no conjugate update for " + to_string(prior.family) + " prior with " +
                      to_string(od.family) + " data");
}

}  // namespace

ParameterSpec conjugate_update(const ParameterSpec& prior, const StudyDesign& design,
                               const FutureDataset& x) {
  if (x.outcomes.size() != design.outcomes.size())
    throw argument_error("dataset does not conform to the design");
  ParameterSpec post = prior;
  for (std::size_t i = 0; i < design.outcomes.size(); ++i) {
    if (design.outcomes[i].linked_parameter != prior.name) continue;
    post.prior = conjugate_update_single(post.prior, x.outcomes[i]);
  }
  return post;
}

// --- Metropolis fallback ---

namespace {

struct Transform {
  // unconstrained <- constrained, and back, with log |d constrained / d unconstrained|
  std::function<double(double)> to_unconstrained;
  std::function<double(double)> to_constrained;
  std::function<double(double)> log_jacobian;  // of u, added to the log target
};

Transform transform_for(const PriorDistribution& prior) {
  switch (prior.family) {
    case PriorFamily::beta:
      return {[](double x) { return std::log(x / (1.0 - x)); },
              [](double u) { return 1.0 / (1.0 + std::exp(-u)); },
              [](double u) {
                const double p = 1.0 / (1.0 + std::exp(-u));
                return std::log(p) + std::log1p(-p);
              }};
    case PriorFamily::normal:
      return {[](double x) { return x; }, [](double u) { return u; }, [](double) { return 0.0; }};
    default:  // positive support
      return {[](double x) { return std::log(x); }, [](double u) { return std::exp(u); },
              [](double u) { return u; }};
  }
}

}  // namespace

std::vector<double> metropolis_posterior_sample(const PriorDistribution& prior,
                                                const std::function<double(double)>& log_lik,
                                                std::size_t iters, std::size_t burn_in,
                                                RngStream& rng) {
  const Transform tr = transform_for(prior);
  auto log_target = [&](double u) {
    const double x = tr.to_constrained(u);
    const double lp = prior.log_pdf(x);
    if (lp == kNegInf) return kNegInf;
    const double ll = log_lik(x);
    if (ll == kNegInf) return kNegInf;
    return lp + ll + tr.log_jacobian(u);
  };

  double u = tr.to_unconstrained(prior.mean());
  if (!std::isfinite(u)) u = 0.0;
  double lt = log_target(u);
  if (lt == kNegInf) {
    // Start from the prior draw with highest target among a few tries.
    for (int attempt = 0; attempt < 64 && lt == kNegInf; ++attempt) {
      u = tr.to_unconstrained(prior.sample(rng));
      lt = log_target(u);
    }
    if (lt == kNegInf) throw degeneracy_error("Metropolis sampler found no support overlap");
  }

  double step = 1.0;
  std::size_t accepted = 0, window = 0;
  std::vector<double> chain;
  chain.reserve(iters > burn_in ? iters - burn_in : 0);
  for (std::size_t i = 0; i < iters; ++i) {
    const double proposal = u + step * rng.normal();
    const double lt_prop = log_target(proposal);
    if (lt_prop > lt || std::log(rng.uniform()) < lt_prop - lt) {
      u = proposal;
      lt = lt_prop;
      ++accepted;
    }
    ++window;
    // Adapt the step only during burn-in, every 100 proposals, toward 20-40%.
    if (i < burn_in && window == 100) {
      const double rate = static_cast<double>(accepted) / 100.0;
      if (rate < 0.20) step *= 0.7;
      if (rate > 0.40) step *= 1.4;
      accepted = 0;
      window = 0;
    }
    if (i >= burn_in) chain.push_back(tr.to_constrained(u));
  }
  return chain;
}

double PosteriorComponent::mean() const {
  if (conjugate()) return std::get<PriorDistribution>(posterior).mean();
  const auto& chain = std::get<std::vector<double>>(posterior);
  double acc = 0.0;
  for (double v : chain) acc += v;
  return acc / static_cast<double>(chain.size());
}

double PosteriorComponent::draw(RngStream& rng) const {
  if (conjugate()) return std::get<PriorDistribution>(posterior).sample(rng);
  const auto& chain = std::get<std::vector<double>>(posterior);
  const std::size_t i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(chain.size()));
  return chain[std::min(i, chain.size() - 1)];
}

std::vector<PosteriorComponent> update_phi_posteriors(const DecisionModel& model,
                                                      const StudyDesign& design,
                                                      const FutureDataset& x, std::uint64_t seed,
                                                      std::uint64_t stream) {
  std::vector<PosteriorComponent> result;
  for (const auto& name : design.phi_names) {
    const ParameterSpec& spec = model.parameter(name);
    bool all_conjugate = true;
    bool any_linked = false;
    for (const auto& o : design.outcomes) {
      if (o.linked_parameter != name) continue;
      any_linked = true;
      all_conjugate = all_conjugate && conjugate_pair(spec.prior, o);
    }
    PosteriorComponent comp;
    comp.name = name;
    if (!any_linked || all_conjugate) {
      comp.posterior = conjugate_update(spec, design, x).prior;
    } else {
      auto log_lik = [&](double value) {
        double total = 0.0;
        for (std::size_t i = 0; i < design.outcomes.size(); ++i) {
          if (design.outcomes[i].linked_parameter != name) continue;
          total += outcome_log_likelihood(x.outcomes[i], value);
        }
        return total;
      };
      // Each component gets its own substream so multi-parameter designs do
      // not share Metropolis randomness.
      RngStream rng(seed, stream * 0x100000001B3ULL + result.size(), RngPurpose::metropolis);
      comp.posterior = metropolis_posterior_sample(spec.prior, log_lik, 5000, 1000, rng);
    }
    result.push_back(std::move(comp));
  }
  return result;
}

}  // namespace voi

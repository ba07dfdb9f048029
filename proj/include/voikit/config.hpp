#ifndef VOIKIT_CONFIG_HPP
#define VOIKIT_CONFIG_HPP

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "voikit/enbs.hpp"
#include "voikit/model.hpp"

namespace voi {

// Flat key-value run configuration (see README for the schema):
//   model = linear-normal
//   lambda = 20000
//   param.<name> = beta(a, b) | gamma(shape, rate) | normal(mean, variance)
//                | invgamma(a, b) | lognormal(mu, sigma2)
//   phi = name[, name...]
//   outcome.<name> = binomial(param) | normal(param, sigma2)
//                  | normal-var(param, known_mean) | poisson(param, exposure)
//                  | exponential(param)
//   n = 50
//   population / horizon / discount / fixed-cost / cost-per-participant
struct RunConfig {
  std::optional<std::string> model_name;
  std::optional<double> lambda;
  std::map<std::string, PriorDistribution> parameter_overrides;
  std::vector<std::string> phi_names;
  std::vector<OutcomeSpec> outcomes;
  std::optional<long> sample_size;
  std::optional<double> population;
  std::optional<long> horizon;
  std::optional<double> discount;
  std::optional<double> fixed_cost;
  std::optional<double> cost_per_participant;
};

RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);

// Builds the model and design a config describes: the named built-in model
// with prior overrides applied, the config's design (or the built-in default
// when no outcomes are given), and the threshold.
struct ResolvedRun {
  DecisionModel model;
  StudyDesign design;
  double lambda = 0.0;
};

ResolvedRun resolve_run(const RunConfig& config);

PopulationSpec population_from_config(const RunConfig& config);
CostModel cost_from_config(const RunConfig& config);

}  // namespace voi

#endif  // VOIKIT_CONFIG_HPP

#include "voikit/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace voi {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& raw, const std::string& context) {
  const std::string s = trim(raw);
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (s.empty() || end != begin + s.size())
    throw parse_error("expected a number for " + context + ", got '" + raw + "'");
  return v;
}

long parse_integer(const std::string& raw, const std::string& context) {
  const double v = parse_number(raw, context);
  const long n = static_cast<long>(v);
  if (static_cast<double>(n) != v)
    throw parse_error("expected an integer for " + context + ", got '" + raw + "'");
  return n;
}

// name(arg1, arg2, ...)
struct Call {
  std::string name;
  std::vector<std::string> args;
};

Call parse_call(const std::string& raw, const std::string& context) {
  const std::string s = trim(raw);
  const std::size_t open = s.find('(');
  if (open == std::string::npos || s.back() != ')')
    throw parse_error("expected name(args...) for " + context + ", got '" + raw + "'");
  Call call;
  call.name = trim(s.substr(0, open));
  const std::string inside = s.substr(open + 1, s.size() - open - 2);
  std::string arg;
  for (char ch : inside) {
    if (ch == ',') {
      call.args.push_back(trim(arg));
      arg.clear();
    } else {
      arg.push_back(ch);
    }
  }
  if (!trim(arg).empty() || !call.args.empty()) call.args.push_back(trim(arg));
  while (!call.args.empty() && call.args.back().empty()) call.args.pop_back();
  return call;
}

PriorDistribution parse_prior(const std::string& raw, const std::string& context) {
  const Call call = parse_call(raw, context);
  if (call.args.size() != 2)
    throw parse_error(context + ": prior '" + call.name + "' takes exactly two hyperparameters");
  PriorDistribution prior;
  if (call.name == "beta") prior.family = PriorFamily::beta;
  else if (call.name == "gamma") prior.family = PriorFamily::gamma;
  else if (call.name == "normal") prior.family = PriorFamily::normal;
  else if (call.name == "invgamma") prior.family = PriorFamily::inverse_gamma;
  else if (call.name == "lognormal") prior.family = PriorFamily::log_normal;
  else throw parse_error(context + ": unknown prior family '" + call.name + "'");
  prior.a = parse_number(call.args[0], context);
  prior.b = parse_number(call.args[1], context);
  prior.validate();
  return prior;
}

OutcomeSpec parse_outcome(const std::string& name, const std::string& raw) {
  const std::string context = "outcome." + name;
  const Call call = parse_call(raw, context);
  if (call.args.empty()) throw parse_error(context + ": first argument must be the linked parameter");
  OutcomeSpec spec;
  spec.name = name;
  spec.linked_parameter = call.args[0];
  auto need_args = [&](std::size_t n) {
    if (call.args.size() != n)
      throw parse_error(context + ": '" + call.name + "' takes " + std::to_string(n) + " argument(s)");
  };
  if (call.name == "binomial") {
    need_args(1);
    spec.family = SamplingFamily::binomial;
  } else if (call.name == "normal") {
    need_args(2);
    spec.family = SamplingFamily::normal_known_variance;
    spec.sigma2 = parse_number(call.args[1], context + " sigma2");
    if (spec.sigma2 <= 0.0) throw parse_error(context + ": sigma2 must be > 0");
  } else if (call.name == "normal-var") {
    need_args(2);
    spec.family = SamplingFamily::normal_known_variance;
    spec.links_variance = true;
    spec.known_mean = parse_number(call.args[1], context + " known mean");
  } else if (call.name == "poisson") {
    need_args(2);
    spec.family = SamplingFamily::poisson;
    spec.exposure = parse_number(call.args[1], context + " exposure");
    if (spec.exposure <= 0.0) throw parse_error(context + ": exposure must be > 0");
  } else if (call.name == "exponential") {
    need_args(1);
    spec.family = SamplingFamily::exponential;
  } else {
    throw parse_error(context + ": unknown sampling family '" + call.name + "'");
  }
  return spec;
}

}  // namespace

RunConfig parse_run_config(std::istream& in) {
  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw parse_error("config line " + std::to_string(line_no) + " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw parse_error("config line " + std::to_string(line_no) + " has an empty key or value");

    if (key == "model") {
      config.model_name = value;
    } else if (key == "lambda") {
      config.lambda = parse_number(value, "lambda");
    } else if (key.rfind("param.", 0) == 0) {
      const std::string name = key.substr(6);
      if (name.empty()) throw parse_error("param. key needs a parameter name");
      config.parameter_overrides[name] = parse_prior(value, key);
    } else if (key == "phi") {
      std::string token;
      std::istringstream ss(value);
      while (std::getline(ss, token, ',')) {
        token = trim(token);
        if (!token.empty()) config.phi_names.push_back(token);
      }
    } else if (key.rfind("outcome.", 0) == 0) {
      const std::string name = key.substr(8);
      if (name.empty()) throw parse_error("outcome. key needs an outcome name");
      config.outcomes.push_back(parse_outcome(name, value));
    } else if (key == "n") {
      config.sample_size = parse_integer(value, "n");
    } else if (key == "population") {
      config.population = parse_number(value, "population");
    } else if (key == "horizon") {
      config.horizon = parse_integer(value, "horizon");
    } else if (key == "discount") {
      config.discount = parse_number(value, "discount");
    } else if (key == "fixed-cost") {
      config.fixed_cost = parse_number(value, "fixed-cost");
    } else if (key == "cost-per-participant") {
      config.cost_per_participant = parse_number(value, "cost-per-participant");
    } else {
      throw parse_error("unknown config key '" + key + "' on line " + std::to_string(line_no));
    }
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open config '" + path + "'");
  return parse_run_config(in);
}

ResolvedRun resolve_run(const RunConfig& config) {
  if (!config.model_name) throw validation_error("config is missing 'model = <built-in name>'");
  BuiltinModel builtin = make_builtin_model(*config.model_name);
  ResolvedRun run;
  run.model = builtin.model;
  for (const auto& [name, prior] : config.parameter_overrides) {
    bool found = false;
    for (auto& p : run.model.parameters) {
      if (p.name == name) {
        p.prior = prior;
        found = true;
        break;
      }
    }
    if (!found) throw validation_error("param." + name + " does not name a model parameter");
  }

  if (config.outcomes.empty()) {
    run.design = builtin.default_design;
    if (!config.phi_names.empty()) run.design.phi_names = config.phi_names;
  } else {
    run.design.outcomes = config.outcomes;
    if (!config.phi_names.empty()) {
      run.design.phi_names = config.phi_names;
    } else {
      for (const auto& o : config.outcomes) {
        if (std::find(run.design.phi_names.begin(), run.design.phi_names.end(),
                      o.linked_parameter) == run.design.phi_names.end())
          run.design.phi_names.push_back(o.linked_parameter);
      }
    }
    run.design.sample_size = builtin.default_design.sample_size;
  }
  if (config.sample_size) run.design.sample_size = *config.sample_size;
  for (const auto& name : run.design.phi_names) run.model.parameter_index(name);
  run.design.validate();
  run.lambda = config.lambda.value_or(builtin.default_lambda);
  if (!(run.lambda > 0.0)) throw validation_error("lambda must be > 0");
  return run;
}

PopulationSpec population_from_config(const RunConfig& config) {
  PopulationSpec pop;
  if (!config.population) throw validation_error("config is missing 'population'");
  pop.annual_incidence = *config.population;
  pop.horizon_years = config.horizon.value_or(1);
  pop.discount_rate = config.discount.value_or(0.0);
  pop.validate();
  return pop;
}

CostModel cost_from_config(const RunConfig& config) {
  CostModel cost;
  cost.fixed = config.fixed_cost.value_or(0.0);
  cost.per_participant = config.cost_per_participant.value_or(0.0);
  cost.validate();
  return cost;
}

}  // namespace voi

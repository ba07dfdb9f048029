#include <CLI11.hpp>
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "voikit/config.hpp"
#include "voikit/enbs.hpp"
#include "voikit/evppi.hpp"
#include "voikit/evsi.hpp"
#include "voikit/psa.hpp"

namespace {

using voi::AugmentedPsaDataset;
using voi::PsaDataset;
using voi::VoiEstimate;
using voi::WtpThreshold;

struct CommonOptions {
  std::string config_path;
  std::string psa_path;
  long generate_s = 0;
  std::optional<std::uint64_t> seed;
  double lambda = 0.0;
  int threads = 0;
  std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonOptions& opt, bool with_psa_source = true) {
  cmd->add_option("--config", opt.config_path, "Model/design config file");
  if (with_psa_source) {
    cmd->add_option("--psa", opt.psa_path, "PSA dataset CSV (Table S1/S2 layout)");
    cmd->add_option("--s", opt.generate_s, "Generate a PSA of this size from the config model");
  }
  cmd->add_option("--seed", opt.seed, "Random seed (required for stochastic commands)");
  cmd->add_option("--lambda", opt.lambda, "Willingness-to-pay threshold (currency per QALY)");
  cmd->add_option("--threads", opt.threads, "Worker threads (default: all cores; output is identical for any value)");
  cmd->add_option("--format", opt.format, "Summary format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
}

struct DataContext {
  PsaDataset psa;
  std::optional<AugmentedPsaDataset> aug;
  std::optional<voi::ResolvedRun> run;
  double lambda = 0.0;
};

// Resolves the PSA source (file or generated), the design, and the threshold.
DataContext load_context(const CommonOptions& opt, bool need_config) {
  DataContext ctx;
  if (!opt.config_path.empty()) {
    const voi::RunConfig config = voi::load_run_config(opt.config_path);
    ctx.run = voi::resolve_run(config);
  } else if (need_config) {
    throw voi::usage_error("this command needs --config");
  }

  const bool have_file = !opt.psa_path.empty();
  const bool have_generate = opt.generate_s > 0;
  if (have_file && have_generate)
    throw voi::usage_error("use exactly one PSA source: --psa or --s");
  if (have_file) {
    voi::LoadedDataset loaded = voi::load_psa_dataset_file(opt.psa_path);
    ctx.psa = loaded.psa;
    if (loaded.augmented())
      ctx.aug = loaded.to_augmented(ctx.run ? ctx.run->design.phi_names : std::vector<std::string>{});
  } else if (have_generate) {
    if (!ctx.run) throw voi::usage_error("--s needs --config to name the model");
    if (!opt.seed) throw voi::usage_error("--s needs --seed");
    ctx.psa = voi::run_psa(ctx.run->model, static_cast<std::size_t>(opt.generate_s), *opt.seed,
                           opt.threads);
  } else {
    throw voi::usage_error("provide a PSA source: --psa <file> or --s <draws>");
  }

  ctx.lambda = opt.lambda > 0.0 ? opt.lambda : (ctx.run ? ctx.run->lambda : 0.0);
  if (!(ctx.lambda > 0.0)) throw voi::usage_error("provide --lambda (or a config with one)");
  return ctx;
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path);
  if (!out) throw voi::format_error("cannot write '" + path + "'");
  out << content;
}

std::string estimate_summary(const std::vector<VoiEstimate>& estimates, const std::string& format) {
  if (format == "json") return voi::voi_estimates_to_json(estimates);
  std::ostringstream os;
  os << "kind,method,N,value,se\n";
  for (const auto& e : estimates) {
    os << voi::to_string(e.kind) << ',' << e.method << ',';
    if (e.design_n) os << *e.design_n;
    os << ',' << voi::format_double(e.value) << ',';
    if (e.mc_se) os << voi::format_double(*e.mc_se);
    os << '\n';
  }
  return os.str();
}

std::vector<long> parse_long_list(const std::string& raw, const std::string& what) {
  std::vector<long> values;
  std::stringstream ss(raw);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    try {
      values.push_back(std::stol(token));
    } catch (...) {
      throw voi::usage_error("cannot parse " + what + " entry '" + token + "'");
    }
  }
  if (values.empty()) throw voi::usage_error(what + " list is empty");
  return values;
}

std::vector<double> parse_double_list(const std::string& raw, const std::string& what) {
  std::vector<double> values;
  std::stringstream ss(raw);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    try {
      values.push_back(std::stod(token));
    } catch (...) {
      throw voi::usage_error("cannot parse " + what + " entry '" + token + "'");
    }
  }
  if (values.empty()) throw voi::usage_error(what + " list is empty");
  return values;
}

// eta columns for the IS/MM methods: reuse the file's, otherwise fit them.
AugmentedPsaDataset require_augmented(DataContext& ctx, const std::vector<std::string>& phi) {
  if (ctx.aug) {
    ctx.aug->phi_names = phi;
    return *ctx.aug;
  }
  voi::EvppiOptions options;
  options.bootstrap_replicates = 0;
  return voi::estimate_evppi(ctx.psa, phi, WtpThreshold{ctx.lambda}, options).augmented;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"voikit: value-of-information analysis over PSA datasets (EVPI, EVPPI, EVSI, ENBS)"};
  app.require_subcommand(1);

  // --- psa ---
  CommonOptions psa_opt;
  std::string psa_out;
  auto* cmd_psa = app.add_subcommand("psa", "Generate a PSA dataset CSV from a config model");
  add_common(cmd_psa, psa_opt, false);
  cmd_psa->add_option("--s", psa_opt.generate_s, "Number of PSA draws")->required();
  cmd_psa->add_option("--out", psa_out, "Output CSV path")->required();

  // --- evpi ---
  CommonOptions evpi_opt;
  auto* cmd_evpi = app.add_subcommand("evpi", "Expected value of perfect information");
  add_common(cmd_evpi, evpi_opt);

  // --- evppi ---
  CommonOptions evppi_opt;
  std::string evppi_phi;
  std::string evppi_aug_out;
  int evppi_bootstrap = 200;
  auto* cmd_evppi = app.add_subcommand("evppi", "Expected value of partial perfect information for a phi subset");
  add_common(cmd_evppi, evppi_opt);
  cmd_evppi->add_option("--phi", evppi_phi, "Comma-separated phi parameter names (default: config phi)");
  cmd_evppi->add_option("--out-aug", evppi_aug_out, "Write the eta-augmented dataset CSV here");
  cmd_evppi->add_option("--bootstrap", evppi_bootstrap, "Bootstrap replicates for the standard error (0 disables)");

  // --- evsi ---
  CommonOptions evsi_opt;
  std::string evsi_method;
  std::string evsi_n_list = "50";
  std::string evsi_out;
  std::string evsi_n0_list;
  int evsi_q = 31;
  long evsi_outer = 2000, evsi_inner = 2000;
  auto* cmd_evsi = app.add_subcommand("evsi", "Expected value of sample information for a study design");
  add_common(cmd_evsi, evsi_opt);
  cmd_evsi->add_option("--method", evsi_method, "rb | is | ga | mm | oracle")
      ->required()
      ->check(CLI::IsMember({"rb", "is", "ga", "mm", "oracle"}));
  cmd_evsi->add_option("--n", evsi_n_list, "Comma-separated study sample sizes");
  cmd_evsi->add_option("--q", evsi_q, "Moment-matching quantile count (30 < Q < 50)");
  cmd_evsi->add_option("--outer", evsi_outer, "Oracle outer iterations");
  cmd_evsi->add_option("--inner", evsi_inner, "Oracle inner iterations");
  cmd_evsi->add_option("--n0", evsi_n0_list,
                       "Prior effective sample sizes per phi component (default: estimated)");
  cmd_evsi->add_option("--out", evsi_out, "Write results here instead of stdout");

  // --- ess ---
  CommonOptions ess_opt;
  std::string ess_method = "direct";
  std::string ess_phi;
  long ess_pilot_n = 50;
  auto* cmd_ess = app.add_subcommand("ess", "Prior effective sample size for a phi component");
  add_common(cmd_ess, ess_opt);
  cmd_ess->add_option("--method", ess_method, "direct | summary | posterior-mean")
      ->check(CLI::IsMember({"direct", "summary", "posterior-mean"}));
  cmd_ess->add_option("--phi", ess_phi, "Parameter name (default: first config phi)");
  cmd_ess->add_option("--pilot-n", ess_pilot_n, "Pilot dataset size for the simulation methods");

  // --- enbs ---
  CommonOptions enbs_opt;
  std::string enbs_evsi_path;
  std::string enbs_out;
  double enbs_population = -1.0, enbs_discount = -1.0;
  long enbs_horizon = -1;
  double enbs_fixed = -1.0, enbs_per_participant = -1.0;
  auto* cmd_enbs = app.add_subcommand("enbs", "Expected net benefit of sampling over evaluated sample sizes");
  cmd_enbs->add_option("--evsi", enbs_evsi_path, "EVSI results CSV (method,N,evsi,se)")->required();
  cmd_enbs->add_option("--config", enbs_opt.config_path, "Config supplying population/cost keys");
  cmd_enbs->add_option("--population", enbs_population, "Annual incident population");
  cmd_enbs->add_option("--horizon", enbs_horizon, "Population horizon in years");
  cmd_enbs->add_option("--discount", enbs_discount, "Annual discount rate (year 1 undiscounted)");
  cmd_enbs->add_option("--fixed-cost", enbs_fixed, "Fixed study cost");
  cmd_enbs->add_option("--cost-per-participant", enbs_per_participant, "Cost per enrolled participant");
  cmd_enbs->add_option("--out", enbs_out, "Write curve CSV here instead of stdout");
  cmd_enbs->add_option("--format", enbs_opt.format, "Summary format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));

  // --- curves ---
  CommonOptions curves_opt;
  std::string curves_lambdas;
  std::string curves_out;
  auto* cmd_curves = app.add_subcommand("curves", "CEAC, CEAF and expected loss curves over thresholds");
  add_common(cmd_curves, curves_opt);
  cmd_curves->add_option("--lambdas", curves_lambdas, "Comma-separated increasing thresholds")->required();
  cmd_curves->add_option("--out", curves_out, "Write curve CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      app.exit(e);
      return 0;
    }
    std::cerr << e.what() << "\n";
    std::cerr << nlohmann::json{{"error", {{"code", "usage"}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  }

  auto selected = [&](CLI::App* cmd) { return cmd->parsed(); };

  if (selected(cmd_psa)) {
    if (!psa_opt.seed) throw voi::usage_error("psa requires --seed");
    if (psa_opt.config_path.empty()) throw voi::usage_error("psa requires --config");
    voi::set_default_thread_count(psa_opt.threads);
    const voi::ResolvedRun run = voi::resolve_run(voi::load_run_config(psa_opt.config_path));
    const PsaDataset ds = voi::run_psa(run.model, static_cast<std::size_t>(psa_opt.generate_s),
                                       *psa_opt.seed, psa_opt.threads);
    voi::save_psa_dataset_file(psa_out, ds);
    return 0;
  }

  if (selected(cmd_evpi)) {
    voi::set_default_thread_count(evpi_opt.threads);
    DataContext ctx = load_context(evpi_opt, false);
    VoiEstimate est = voi::evpi(voi::compute_net_benefit(ctx.psa, WtpThreshold{ctx.lambda}));
    std::cout << estimate_summary({est}, evpi_opt.format);
    return 0;
  }

  if (selected(cmd_evppi)) {
    voi::set_default_thread_count(evppi_opt.threads);
    DataContext ctx = load_context(evppi_opt, evppi_phi.empty());
    std::vector<std::string> phi;
    if (!evppi_phi.empty()) {
      std::stringstream ss(evppi_phi);
      std::string token;
      while (std::getline(ss, token, ','))
        if (!token.empty()) phi.push_back(token);
    } else if (ctx.run) {
      phi = ctx.run->design.phi_names;
    }
    if (phi.empty()) throw voi::usage_error("evppi needs --phi or a config with a phi set");
    voi::EvppiOptions options;
    options.bootstrap_replicates = evppi_bootstrap;
    options.threads = evppi_opt.threads;
    const voi::EvppiResult result =
        voi::estimate_evppi(ctx.psa, phi, WtpThreshold{ctx.lambda}, options);
    if (!evppi_aug_out.empty()) voi::save_psa_dataset_file(evppi_aug_out, result.augmented);
    std::cout << estimate_summary({result.estimate}, evppi_opt.format);
    return 0;
  }

  if (selected(cmd_evsi)) {
    if (!evsi_opt.seed) throw voi::usage_error("evsi requires --seed");
    voi::set_default_thread_count(evsi_opt.threads);
    DataContext ctx = load_context(evsi_opt, true);
    const std::vector<long> n_values = parse_long_list(evsi_n_list, "--n");
    voi::StudyDesign design = ctx.run->design;
    voi::EvsiOptions options;
    options.threads = evsi_opt.threads;
    const WtpThreshold lambda{ctx.lambda};
    std::vector<VoiEstimate> results;

    if (evsi_method == "ga") {
      std::vector<voi::EssEstimate> ess;
      if (!evsi_n0_list.empty()) {
        const std::vector<double> n0 = parse_double_list(evsi_n0_list, "--n0");
        if (n0.size() != design.phi_names.size())
          throw voi::usage_error("--n0 needs one value per phi component");
        for (std::size_t p = 0; p < n0.size(); ++p)
          ess.push_back(voi::EssEstimate{design.phi_names[p], n0[p], "cli"});
      } else {
        for (const auto& name : design.phi_names) {
          const voi::ParameterSpec& prior = ctx.run->model.parameter(name);
          const auto outcome =
              std::find_if(design.outcomes.begin(), design.outcomes.end(),
                           [&](const voi::OutcomeSpec& o) { return o.linked_parameter == name; });
          if (outcome == design.outcomes.end())
            throw voi::validation_error("no outcome informs phi component '" + name + "'");
          try {
            ess.push_back(voi::ess_direct(prior, *outcome));
          } catch (const voi::Error&) {
            try {
              ess.push_back(voi::ess_from_summary(design, ctx.psa, name, 50, *evsi_opt.seed,
                                                  evsi_opt.threads));
            } catch (const voi::Error&) {
              ess.push_back(voi::ess_from_posterior_means(design, ctx.psa, name, 50, *evsi_opt.seed,
                                                          evsi_opt.threads, &prior));
            }
          }
        }
      }
      results = voi::evsi_ga(ctx.psa, design, ess, lambda, n_values, options);
    } else if (evsi_method == "rb") {
      for (long n : n_values)
        results.push_back(voi::evsi_rb(ctx.psa, design.with_sample_size(n), lambda, *evsi_opt.seed,
                                       options));
    } else if (evsi_method == "is") {
      const AugmentedPsaDataset aug = require_augmented(ctx, design.phi_names);
      for (long n : n_values)
        results.push_back(voi::evsi_is(aug, design.with_sample_size(n), lambda, *evsi_opt.seed,
                                       options));
    } else if (evsi_method == "mm") {
      const AugmentedPsaDataset aug = require_augmented(ctx, design.phi_names);
      for (long n : n_values)
        results.push_back(voi::evsi_mm(ctx.run->model, aug, design.with_sample_size(n), lambda,
                                       evsi_q, *evsi_opt.seed, options));
    } else {  // oracle
      for (long n : n_values)
        results.push_back(voi::evsi_oracle(ctx.run->model, design.with_sample_size(n), lambda,
                                           static_cast<std::size_t>(evsi_outer),
                                           static_cast<std::size_t>(evsi_inner), *evsi_opt.seed,
                                           options));
    }
    const std::string content = evsi_opt.format == "json" ? voi::voi_estimates_to_json(results)
                                                          : voi::voi_estimates_to_csv(results);
    write_output(evsi_out, content);
    return 0;
  }

  if (selected(cmd_ess)) {
    voi::set_default_thread_count(ess_opt.threads);
    DataContext ctx = load_context(ess_opt, true);
    const voi::StudyDesign& design = ctx.run->design;
    std::string phi = ess_phi.empty()
                          ? (design.phi_names.empty() ? "" : design.phi_names.front())
                          : ess_phi;
    if (phi.empty()) throw voi::usage_error("ess needs --phi or a config phi set");
    const voi::ParameterSpec& prior = ctx.run->model.parameter(phi);
    voi::EssEstimate est;
    if (ess_method == "direct") {
      const auto outcome =
          std::find_if(design.outcomes.begin(), design.outcomes.end(),
                       [&](const voi::OutcomeSpec& o) { return o.linked_parameter == phi; });
      if (outcome == design.outcomes.end())
        throw voi::validation_error("no outcome informs phi component '" + phi + "'");
      est = voi::ess_direct(prior, *outcome);
    } else if (ess_method == "summary") {
      if (!ess_opt.seed) throw voi::usage_error("ess --method summary requires --seed");
      est = voi::ess_from_summary(design, ctx.psa, phi, ess_pilot_n, *ess_opt.seed, ess_opt.threads);
    } else {
      if (!ess_opt.seed) throw voi::usage_error("ess --method posterior-mean requires --seed");
      est = voi::ess_from_posterior_means(design, ctx.psa, phi, ess_pilot_n, *ess_opt.seed,
                                          ess_opt.threads, &prior);
    }
    if (ess_opt.format == "json") {
      std::cout << nlohmann::json{{"parameter", est.parameter}, {"n0", est.n0}, {"method", est.method}}
                       .dump(2)
                << "\n";
    } else {
      std::cout << "parameter,n0,method\n"
                << est.parameter << ',' << voi::format_double(est.n0) << ',' << est.method << "\n";
    }
    return 0;
  }

  if (selected(cmd_enbs)) {
    voi::RunConfig config;
    if (!enbs_opt.config_path.empty()) config = voi::load_run_config(enbs_opt.config_path);
    if (enbs_population >= 0.0) config.population = enbs_population;
    if (enbs_horizon >= 0) config.horizon = enbs_horizon;
    if (enbs_discount >= 0.0) config.discount = enbs_discount;
    if (enbs_fixed >= 0.0) config.fixed_cost = enbs_fixed;
    if (enbs_per_participant >= 0.0) config.cost_per_participant = enbs_per_participant;
    const voi::PopulationSpec pop = voi::population_from_config(config);
    const voi::CostModel cost = voi::cost_from_config(config);

    std::ifstream in(enbs_evsi_path);
    if (!in) throw voi::format_error("cannot open '" + enbs_evsi_path + "'");
    std::string line;
    if (!std::getline(in, line)) throw voi::format_error("EVSI results file is empty");
    std::vector<std::pair<long, double>> evsi_by_n;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string method, n_str, value_str;
      std::getline(ss, method, ',');
      std::getline(ss, n_str, ',');
      std::getline(ss, value_str, ',');
      try {
        evsi_by_n.emplace_back(std::stol(n_str), std::stod(value_str));
      } catch (...) {
        throw voi::parse_error("cannot parse EVSI results line '" + line + "'");
      }
    }
    const voi::EnbsCurve curve = voi::enbs_curve(evsi_by_n, pop, cost);
    const std::string content = enbs_opt.format == "json" ? voi::enbs_curve_to_json(curve)
                                                          : voi::enbs_curve_to_csv(curve);
    write_output(enbs_out, content);
    if (!curve.research_worthwhile)
      std::cerr << "note: maximum ENBS is negative; research not worthwhile on this grid\n";
    return 0;
  }

  if (selected(cmd_curves)) {
    voi::set_default_thread_count(curves_opt.threads);
    DataContext ctx = load_context(curves_opt, false);
    const std::vector<double> lambdas = parse_double_list(curves_lambdas, "--lambdas");
    const voi::DecisionUncertaintyCurves curves = voi::decision_uncertainty_curves(ctx.psa, lambdas);
    std::ostringstream os;
    voi::save_curves_csv(os, curves);
    write_output(curves_out, os.str());
    return 0;
  }

  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const voi::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << nlohmann::json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump()
              << "\n";
    switch (e.kind()) {
      case voi::ErrorKind::usage: return 2;
      case voi::ErrorKind::data: return 3;
      case voi::ErrorKind::numeric: return 4;
    }
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << nlohmann::json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump()
              << "\n";
    return 4;
  }
}

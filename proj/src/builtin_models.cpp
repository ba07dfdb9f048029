#include <cmath>

#include "voikit/model.hpp"

namespace voi {

namespace {

ParameterSpec param(std::string name, PriorFamily family, double a, double b) {
  ParameterSpec p{std::move(name), PriorDistribution{family, a, b}};
  p.prior.validate();
  return p;
}

}  // namespace

// Two strategies; INB at threshold L is L*phi - 1500 + psi, so EVPI, EVPPI and
// preposterior EVSI all have unit-normal-loss closed forms. The default design
// observes phi directly with known variance 0.0625 (prior ESS 25).
BuiltinModel make_linear_normal_model() {
  BuiltinModel bm;
  bm.model.parameters = {
      param("phi", PriorFamily::normal, 0.0825, 0.0025),
      param("psi", PriorFamily::normal, 0.0, 640000.0),
  };
  bm.model.strategies = {{1, "standard"}, {2, "novel"}};
  bm.model.evaluate = [](std::span<const double> theta, std::span<double> eff, std::span<double> cost) {
    eff[0] = 0.0;
    cost[0] = 0.0;
    eff[1] = theta[0];
    cost[1] = 1500.0 - theta[1];
  };
  OutcomeSpec x;
  x.name = "x";
  x.family = SamplingFamily::normal_known_variance;
  x.linked_parameter = "phi";
  x.sigma2 = 0.0625;
  bm.default_design = StudyDesign{{"phi"}, {x}, 50};
  bm.default_lambda = 20000.0;
  return bm;
}

// Two strategies; response probability p drives the incremental benefit and a
// binomial study informs it. Parameters chosen so EVPPI(p)/EVPI is about 0.85.
BuiltinModel make_beta_binomial_model() {
  BuiltinModel bm;
  bm.model.parameters = {
      param("p", PriorFamily::beta, 4.0, 6.0),
      param("psi", PriorFamily::normal, 0.0, 2250000.0),
  };
  bm.model.strategies = {{1, "standard"}, {2, "novel"}};
  bm.model.evaluate = [](std::span<const double> theta, std::span<double> eff, std::span<double> cost) {
    eff[0] = 0.0;
    cost[0] = 0.0;
    eff[1] = theta[0];
    cost[1] = 7000.0 - theta[1];
  };
  OutcomeSpec x;
  x.name = "responders";
  x.family = SamplingFamily::binomial;
  x.linked_parameter = "p";
  bm.default_design = StudyDesign{{"p"}, {x}, 50};
  bm.default_lambda = 20000.0;
  return bm;
}

// Two strategies; an adverse-event rate with a gamma prior, informed by
// exponentially distributed waiting times.
BuiltinModel make_gamma_exponential_model() {
  BuiltinModel bm;
  bm.model.parameters = {
      param("rate", PriorFamily::gamma, 9.0, 3.0),
      param("psi", PriorFamily::normal, 0.0, 90000.0),
  };
  bm.model.strategies = {{1, "standard"}, {2, "novel"}};
  bm.model.evaluate = [](std::span<const double> theta, std::span<double> eff, std::span<double> cost) {
    eff[0] = 0.0;
    cost[0] = 0.0;
    eff[1] = 0.05 * (3.0 - theta[0]);
    cost[1] = 800.0 - theta[1];
  };
  OutcomeSpec x;
  x.name = "waits";
  x.family = SamplingFamily::exponential;
  x.linked_parameter = "rate";
  bm.default_design = StudyDesign{{"rate"}, {x}, 50};
  bm.default_lambda = 20000.0;
  return bm;
}

// Hypothetical three-strategy cohort model over an 11-year horizon. Strategy 1
// is the reference treatment; strategies 2 and 3 scale its distant-recurrence
// probability through hazard ratios:
//
//   pdr_1 = p.dr.t1,   pdr_t = 1 - (1 - p.dr.t1)^hr.dr.t   (t = 2, 3)
//   qaly_t = 11 * ((1 - pdr_t) * u.ndr + pdr_t * u.dr) + p.tox.t * u.d.tox
//   cost_t = treat_t + pdr_t * c.dr + p.tox.t * c.tox,  treat = {2000, 12000, 15000}
BuiltinModel make_dr_tox_model() {
  BuiltinModel bm;
  bm.model.parameters = {
      param("p.dr.t1", PriorFamily::beta, 27.0, 73.0),
      param("hr.dr.t2", PriorFamily::log_normal, std::log(0.58), 0.004),
      param("hr.dr.t3", PriorFamily::log_normal, std::log(0.56), 0.004),
      param("p.tox.t1", PriorFamily::beta, 55.0, 85.0),
      param("p.tox.t2", PriorFamily::beta, 21.0, 79.0),
      param("p.tox.t3", PriorFamily::beta, 36.0, 564.0),
      param("u.ndr", PriorFamily::beta, 30.0, 6.0),
      param("u.dr", PriorFamily::beta, 140.0, 60.0),
      param("u.d.tox", PriorFamily::normal, -0.025, 0.000036),
      param("c.dr", PriorFamily::gamma, 16.0, 16.0 / 100000.0),
      param("c.tox", PriorFamily::gamma, 25.0, 25.0 / 33000.0),
  };
  bm.model.strategies = {{1, "t1"}, {2, "t2"}, {3, "t3"}};
  bm.model.evaluate = [](std::span<const double> theta, std::span<double> eff, std::span<double> cost) {
    const double p_dr1 = theta[0];
    const double hr2 = theta[1];
    const double hr3 = theta[2];
    const double u_ndr = theta[6];
    const double u_dr = theta[7];
    const double u_dtox = theta[8];
    const double c_dr = theta[9];
    const double c_tox = theta[10];
    const double horizon = 11.0;
    const double treat[3] = {2000.0, 12000.0, 15000.0};
    const double pdr[3] = {p_dr1, 1.0 - std::pow(1.0 - p_dr1, hr2), 1.0 - std::pow(1.0 - p_dr1, hr3)};
    for (int t = 0; t < 3; ++t) {
      const double p_tox = theta[3 + t];
      eff[t] = horizon * ((1.0 - pdr[t]) * u_ndr + pdr[t] * u_dr) + p_tox * u_dtox;
      cost[t] = treat[t] + pdr[t] * c_dr + p_tox * c_tox;
    }
  };
  OutcomeSpec x;
  x.name = "dr.events";
  x.family = SamplingFamily::binomial;
  x.linked_parameter = "p.dr.t1";
  bm.default_design = StudyDesign{{"p.dr.t1"}, {x}, 100};
  bm.default_lambda = 20000.0;
  return bm;
}

BuiltinModel make_builtin_model(const std::string& name) {
  if (name == "linear-normal") return make_linear_normal_model();
  if (name == "beta-binomial") return make_beta_binomial_model();
  if (name == "gamma-exponential") return make_gamma_exponential_model();
  if (name == "dr-tox") return make_dr_tox_model();
  throw argument_error("unknown built-in model '" + name + "'; available: linear-normal, beta-binomial, gamma-exponential, dr-tox");
}

std::vector<std::string> builtin_model_names() {
  return {"linear-normal", "beta-binomial", "gamma-exponential", "dr-tox"};
}

}  // namespace voi

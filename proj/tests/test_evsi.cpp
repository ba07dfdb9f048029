#include <doctest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "voikit/evppi.hpp"
#include "voikit/evsi.hpp"

using namespace voi;

namespace {

PosteriorMeanMatrix mu_from_column(const std::vector<double>& mu2) {
  PosteriorMeanMatrix mu;
  mu.values = Matrix(mu2.size(), 2);
  for (std::size_t s = 0; s < mu2.size(); ++s) mu.values.at(s, 1) = mu2[s];
  mu.reference = 0;
  return mu;
}

AugmentedPsaDataset toy_augmented(std::vector<double> p_values, std::vector<double> g_values,
                                  double lambda) {
  const std::size_t S = p_values.size();
  // Strategy 1 is the reference (NB 0); strategy 2 has NB -5 so the reference
  // choice is unambiguous. eta carries the supplied incremental values.
  std::vector<std::vector<double>> effects = {std::vector<double>(S, 0.0),
                                              std::vector<double>(S, 0.0)};
  std::vector<std::vector<double>> costs = {std::vector<double>(S, 0.0),
                                            std::vector<double>(S, 5.0 * lambda)};
  AugmentedPsaDataset aug;
  aug.base = PsaDataset({"p"}, {{1, "t1"}, {2, "t2"}}, {std::move(p_values)}, std::move(effects),
                        std::move(costs));
  aug.nmb = Matrix(S, 2);
  aug.eta = Matrix(S, 2);
  for (std::size_t s = 0; s < S; ++s) {
    aug.nmb.at(s, 1) = -5.0 * lambda;
    aug.eta.at(s, 1) = g_values[s];
  }
  aug.phi_names = {"p"};
  return aug;
}

StudyDesign binomial_design(long n) {
  OutcomeSpec o;
  o.name = "x";
  o.family = SamplingFamily::binomial;
  o.linked_parameter = "p";
  return StudyDesign{{"p"}, {o}, n};
}

EvppiOptions no_bootstrap() {
  EvppiOptions opt;
  opt.bootstrap_replicates = 0;
  return opt;
}

}  // namespace

TEST_CASE("Eq. (4) hand computations") {
  SUBCASE("mu2 = {-1, +1} gives 0.5") {
    const VoiEstimate est = evsi_from_posterior_means(mu_from_column({-1.0, 1.0}));
    CHECK(est.value == doctest::Approx(0.5));
  }
  SUBCASE("all-negative posterior means never switch the decision") {
    const VoiEstimate est = evsi_from_posterior_means(mu_from_column({-3.0, -1.0, -2.0}));
    CHECK(est.value == 0.0);
  }
  SUBCASE("constant positive posterior mean carries no value") {
    const VoiEstimate est = evsi_from_posterior_means(mu_from_column({2.5, 2.5, 2.5, 2.5}));
    CHECK(est.value == 0.0);
  }
  SUBCASE("reference column must be zero") {
    PosteriorMeanMatrix mu = mu_from_column({1.0, 2.0});
    mu.values.at(0, 0) = 0.5;
    CHECK_THROWS_AS(evsi_from_posterior_means(mu), Error);
  }
}

TEST_CASE("Eq. (4) equals the brute-force double loop bit-for-bit") {
  RngStream rng(881, 0, RngPurpose::psa_draw);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t S = 2 + static_cast<std::size_t>(rng.uniform() * 98);
    const std::size_t T = 2 + static_cast<std::size_t>(rng.uniform() * 3);
    PosteriorMeanMatrix mu;
    mu.values = Matrix(S, T);
    mu.reference = static_cast<std::size_t>(rng.uniform() * double(T));
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t t = 0; t < T; ++t)
        mu.values.at(s, t) = t == mu.reference ? 0.0 : rng.normal(0.0, 1e8);
    const VoiEstimate est = evsi_from_posterior_means(mu);
    CHECK(est.value == oracles::brute_force_max_gain(mu.values));
  }
}

// --- regression-based method ---

TEST_CASE("rb: a study about an irrelevant parameter is worthless") {
  RngStream rng(5150, 0, RngPurpose::psa_draw);
  const std::size_t S = 2000;
  std::vector<double> p(S), dummy(S), e2(S);
  for (std::size_t s = 0; s < S; ++s) {
    p[s] = rng.beta(4.0, 6.0);
    dummy[s] = rng.beta(2.0, 2.0);
    e2[s] = p[s];
  }
  const PsaDataset ds({"p", "dummy"}, {{1, "t1"}, {2, "t2"}}, {p, dummy},
                      {std::vector<double>(S, 0.0), e2},
                      {std::vector<double>(S, 0.0), std::vector<double>(S, 8000.0)});
  OutcomeSpec o;
  o.name = "x";
  o.family = SamplingFamily::binomial;
  o.linked_parameter = "dummy";
  const StudyDesign design{{"dummy"}, {o}, 100};
  const VoiEstimate est = evsi_rb(ds, design, WtpThreshold{20000.0}, 3);
  CHECK(est.value <= 3.0 * *est.mc_se + 1e-9);
}

TEST_CASE("rb: the large-N limit approaches EVPPI") {
  const oracles::LinearNormalToy toy;
  const BuiltinModel bm = make_linear_normal_model();
  const PsaDataset ds = run_psa(bm.model, 1000, 21);
  const VoiEstimate est =
      evsi_rb(ds, bm.default_design.with_sample_size(1000000), WtpThreshold{toy.lambda}, 9);
  const EvppiResult evppi = estimate_evppi(ds, {"phi"}, WtpThreshold{toy.lambda}, no_bootstrap());
  CHECK(std::abs(est.value - evppi.estimate.value) / evppi.estimate.value < 0.05);
}

TEST_CASE("rb: normal-normal closed form at N = 50") {
  const oracles::LinearNormalToy toy;
  const BuiltinModel bm = make_linear_normal_model();
  const PsaDataset ds = run_psa(bm.model, 5000, 2);
  const VoiEstimate est =
      evsi_rb(ds, bm.default_design.with_sample_size(50), WtpThreshold{toy.lambda}, 4);
  CHECK(std::abs(est.value - toy.evsi(50)) / toy.evsi(50) < 0.05);
}

TEST_CASE("rb: more than six outcomes is refused with the dimension message") {
  const BuiltinModel bm = make_linear_normal_model();
  const PsaDataset ds = run_psa(bm.model, 2000, 2);
  StudyDesign design = bm.default_design;
  for (int i = 0; i < 7; ++i) {
    OutcomeSpec o = design.outcomes[0];
    o.name = "x" + std::to_string(i);
    if (i == 0)
      design.outcomes[0] = o;
    else
      design.outcomes.push_back(o);
  }
  REQUIRE(design.outcomes.size() == 7);
  try {
    evsi_rb(ds, design, WtpThreshold{20000.0}, 1);
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("outcomes") != std::string::npos);
  }
}

// --- importance sampling ---

TEST_CASE("is: weighted posterior means match a hand recomputation") {
  const double lambda = 1.0;
  AugmentedPsaDataset aug = toy_augmented({0.2, 0.8}, {-10.0, 20.0}, lambda);
  const StudyDesign design = binomial_design(1);
  const std::uint64_t seed = 33;
  const VoiEstimate est = evsi_is(aug, design, WtpThreshold{lambda}, seed);

  // Replicate the internal data draws through the documented stream scheme and
  // recompute Eq. (4) from first principles.
  const std::vector<double> p = {0.2, 0.8};
  Matrix mu(2, 2);
  for (std::size_t s = 0; s < 2; ++s) {
    RngStream rng(seed, s, RngPurpose::future_data);
    const double phi[1] = {p[s]};
    const FutureDataset x = simulate_future_dataset(design, phi, rng);
    const double lik[2] = {
        x.outcomes[0].count == 1 ? 0.2 : 0.8,
        x.outcomes[0].count == 1 ? 0.8 : 0.2,
    };
    const double total = lik[0] + lik[1];
    mu.at(s, 1) = lik[0] / total * (-10.0 - 0.0) + lik[1] / total * (20.0 - 0.0);
  }
  CHECK(est.value == doctest::Approx(oracles::brute_force_max_gain(mu)).epsilon(1e-12));
  CHECK(est.diagnostics.values.at("max_weight_sum_error") <= 1e-12);
}

TEST_CASE("is: a likelihood constant in phi makes every posterior mean the prior mean") {
  AugmentedPsaDataset aug = toy_augmented({0.3, 0.3, 0.3, 0.3}, {4.0, -2.0, 10.0, 0.0}, 1.0);
  const VoiEstimate est = evsi_is(aug, binomial_design(5), WtpThreshold{1.0}, 7);
  CHECK(est.value == 0.0);
}

TEST_CASE("is: beta-binomial agrees with the nested Monte Carlo oracle") {
  const BuiltinModel bm = make_beta_binomial_model();
  const PsaDataset ds = run_psa(bm.model, 5000, 31);
  const WtpThreshold lambda{20000.0};
  const AugmentedPsaDataset aug =
      estimate_evppi(ds, {"p"}, lambda, no_bootstrap()).augmented;
  const StudyDesign design = bm.default_design.with_sample_size(20);
  const VoiEstimate is_est = evsi_is(aug, design, lambda, 5);
  const VoiEstimate oracle = evsi_oracle(bm.model, design, lambda, 2000, 2000, 17);
  CHECK(oracles::agree_within_3se(is_est.value, *is_est.mc_se, oracle.value, *oracle.mc_se));
}

TEST_CASE("is: weights warn when the likelihood concentrates") {
  const BuiltinModel bm = make_beta_binomial_model();
  const PsaDataset ds = run_psa(bm.model, 400, 31);
  const WtpThreshold lambda{20000.0};
  const AugmentedPsaDataset aug = estimate_evppi(ds, {"p"}, lambda, no_bootstrap()).augmented;
  const VoiEstimate est =
      evsi_is(aug, bm.default_design.with_sample_size(2000000), lambda, 5);
  CHECK_FALSE(est.diagnostics.warnings.empty());
  CHECK(est.diagnostics.values.at("median_weight_ess") < 0.01 * 400);
}

// --- Gaussian approximation ---

TEST_CASE("ga: N = n0 halves the spread exactly on a linear model") {
  // Deterministic linear INB so the metamodel is exact and the rescaling is
  // checkable by hand.
  RngStream rng(61, 0, RngPurpose::psa_draw);
  const std::size_t S = 2000;
  std::vector<double> phi(S), e2(S);
  for (std::size_t s = 0; s < S; ++s) {
    phi[s] = rng.normal(0.1, 0.01);
    e2[s] = phi[s];
  }
  const PsaDataset ds({"phi"}, {{1, "t1"}, {2, "t2"}}, {phi},
                      {std::vector<double>(S, 0.0), e2},
                      {std::vector<double>(S, 0.0), std::vector<double>(S, 2000.0)});
  OutcomeSpec o;
  o.name = "x";
  o.family = SamplingFamily::normal_known_variance;
  o.linked_parameter = "phi";
  o.sigma2 = 1.0;
  const StudyDesign design{{"phi"}, {o}, 1};
  const double n0 = 25.0;
  const std::vector<EssEstimate> ess = {{"phi", n0, "direct"}};
  const WtpThreshold lambda{20000.0};
  const std::vector<VoiEstimate> out =
      evsi_ga(ds, design, ess, lambda, {static_cast<long>(n0)});

  double phi_mean = 0.0;
  for (double v : phi) phi_mean += v;
  phi_mean /= double(S);
  Matrix mu(S, 2);
  for (std::size_t s = 0; s < S; ++s)
    mu.at(s, 1) = lambda.lambda * (0.5 * phi[s] + 0.5 * phi_mean) - 2000.0;
  CHECK(out[0].value ==
        doctest::Approx(std::max(0.0, oracles::brute_force_max_gain(mu))).epsilon(1e-5));
}

TEST_CASE("ga: the N -> infinity limit reproduces the metamodel EVPPI within 1%") {
  const BuiltinModel bm = make_linear_normal_model();
  const PsaDataset ds = run_psa(bm.model, 4000, 13);
  const WtpThreshold lambda{20000.0};
  const double n0 = 25.0;
  const std::vector<EssEstimate> ess = {{"phi", n0, "direct"}};
  const long huge = static_cast<long>(1e9 * n0);
  const std::vector<VoiEstimate> out = evsi_ga(ds, bm.default_design, ess, lambda, {huge});
  const EvppiResult evppi = estimate_evppi(ds, {"phi"}, lambda, no_bootstrap());
  CHECK(std::abs(out[0].value - evppi.estimate.value) <= 0.01 * evppi.estimate.value);
}

TEST_CASE("ga: normal-normal closed form across N") {
  const oracles::LinearNormalToy toy;
  const BuiltinModel bm = make_linear_normal_model();
  const PsaDataset ds = run_psa(bm.model, 5000, 3);
  const std::vector<EssEstimate> ess = {{"phi", toy.n0(), "direct"}};
  const std::vector<long> n_list = {10, 50, 250};
  const std::vector<VoiEstimate> out =
      evsi_ga(ds, bm.default_design, ess, WtpThreshold{toy.lambda}, n_list);
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    const double truth = toy.evsi(double(n_list[i]));
    CHECK(std::abs(out[i].value - truth) / truth < 0.05);
  }
  // Exact monotonicity in N on a fixed PSA.
  CHECK(out[0].value <= out[1].value);
  CHECK(out[1].value <= out[2].value);
}

TEST_CASE("ga: argument validation") {
  const BuiltinModel bm = make_linear_normal_model();
  const PsaDataset ds = run_psa(bm.model, 2000, 3);
  CHECK_THROWS_AS(
      evsi_ga(ds, bm.default_design, {{"phi", -1.0, "direct"}}, WtpThreshold{20000.0}, {10}),
      Error);
  CHECK_THROWS_AS(evsi_ga(ds, bm.default_design, {}, WtpThreshold{20000.0}, {10}), Error);
  CHECK_THROWS_AS(
      evsi_ga(ds, bm.default_design, {{"phi", 25.0, "direct"}}, WtpThreshold{20000.0}, {}),
      Error);
}

// --- moment matching ---

TEST_CASE("mm: Q bounds are enforced and small N warns") {
  const BuiltinModel bm = make_beta_binomial_model();
  const PsaDataset ds = run_psa(bm.model, 1500, 31);
  const WtpThreshold lambda{20000.0};
  const AugmentedPsaDataset aug = estimate_evppi(ds, {"p"}, lambda, no_bootstrap()).augmented;
  CHECK_THROWS_AS(
      evsi_mm(bm.model, aug, bm.default_design.with_sample_size(50), lambda, 30, 1), Error);
  CHECK_THROWS_AS(
      evsi_mm(bm.model, aug, bm.default_design.with_sample_size(50), lambda, 50, 1), Error);
  const VoiEstimate small_n =
      evsi_mm(bm.model, aug, bm.default_design.with_sample_size(5), lambda, 31, 1);
  bool warned = false;
  for (const auto& w : small_n.diagnostics.warnings)
    warned = warned || w.find("below 10") != std::string::npos;
  CHECK(warned);
}

TEST_CASE("mm: perfect learning about phi reproduces the EVPPI value") {
  // INB deterministic in phi: a huge study pins phi, so the variance target is
  // the full eta variance and the rescale factor is one.
  const BuiltinModel bm = make_beta_binomial_model();
  DecisionModel model = bm.model;
  model.evaluate = [](std::span<const double> theta, std::span<double> eff, std::span<double> cost) {
    eff[0] = 0.0;
    cost[0] = 0.0;
    eff[1] = theta[0];
    cost[1] = 7000.0;  // psi removed: NB depends on p alone
  };
  const PsaDataset ds = run_psa(model, 4000, 3);
  const WtpThreshold lambda{20000.0};
  const AugmentedPsaDataset aug = estimate_evppi(ds, {"p"}, lambda, no_bootstrap()).augmented;
  MmVarianceLedger ledger;
  const VoiEstimate est = evsi_mm(model, aug, bm.default_design.with_sample_size(100000), lambda,
                                  31, 9, {}, &ledger);
  const double evppi_value = std::max(
      0.0, max_gain_estimate(
               [&] {
                 Matrix g(aug.eta.rows(), aug.eta.cols());
                 const std::size_t ref = aug.reference_strategy();
                 for (std::size_t s = 0; s < g.rows(); ++s)
                   for (std::size_t t = 0; t < g.cols(); ++t)
                     g.at(s, t) = aug.eta.at(s, t) - aug.eta.at(s, ref);
                 return g;
               }(),
               nullptr));
  CHECK(std::abs(est.value - evppi_value) <= 0.02 * evppi_value);
}

TEST_CASE("mm: uninformative data give zero EVSI") {
  // The model ignores "noise", so updating it cannot move the net benefit.
  DecisionModel model;
  model.parameters = {ParameterSpec{"p", PriorDistribution{PriorFamily::beta, 4.0, 6.0}},
                      ParameterSpec{"noise", PriorDistribution{PriorFamily::beta, 2.0, 2.0}}};
  model.strategies = {{1, "t1"}, {2, "t2"}};
  model.evaluate = [](std::span<const double> theta, std::span<double> eff, std::span<double> cost) {
    eff[0] = 0.0;
    cost[0] = 0.0;
    eff[1] = theta[0];
    cost[1] = 7000.0;
  };
  const PsaDataset ds = run_psa(model, 3000, 5);
  const WtpThreshold lambda{20000.0};
  const AugmentedPsaDataset aug = estimate_evppi(ds, {"noise"}, lambda, no_bootstrap()).augmented;
  OutcomeSpec o;
  o.name = "x";
  o.family = SamplingFamily::binomial;
  o.linked_parameter = "noise";
  const StudyDesign design{{"noise"}, {o}, 50};
  const VoiEstimate est = evsi_mm(model, aug, design, lambda, 31, 7);
  const VoiEstimate evpi_est = evpi(compute_net_benefit(ds, lambda));
  CHECK(est.value <= 0.02 * evpi_est.value);
}

TEST_CASE("mm: beta-binomial agrees with the oracle and preserves eta means") {
  const BuiltinModel bm = make_beta_binomial_model();
  const PsaDataset ds = run_psa(bm.model, 5000, 31);
  const WtpThreshold lambda{20000.0};
  const AugmentedPsaDataset aug = estimate_evppi(ds, {"p"}, lambda, no_bootstrap()).augmented;
  const StudyDesign design = bm.default_design.with_sample_size(50);
  MmVarianceLedger ledger;
  const VoiEstimate mm = evsi_mm(bm.model, aug, design, lambda, 31, 5, {}, &ledger);
  const VoiEstimate oracle = evsi_oracle(bm.model, design, lambda, 2000, 2000, 17);
  CHECK(oracles::agree_within_3se(mm.value, *mm.mc_se, oracle.value, *oracle.mc_se));

  const std::size_t ref = aug.reference_strategy();
  for (std::size_t t = 0; t < aug.eta.cols(); ++t) {
    if (t == ref) continue;
    double g_mean = 0.0;
    for (std::size_t s = 0; s < aug.eta.rows(); ++s)
      g_mean += aug.eta.at(s, t) - aug.eta.at(s, ref);
    g_mean /= double(aug.eta.rows());
    const double mu_mean = ledger.rescaled_eta.column_mean(t);
    CHECK(std::abs(mu_mean - g_mean) <= 1e-9 * std::max(1.0, std::abs(g_mean)));
  }
  CHECK(ledger.quantile_levels.size() == 31);
  CHECK(ledger.sigma_q.rows() == 31);
}

// --- oracle ---

TEST_CASE("oracle: N = 0 is exactly zero") {
  const BuiltinModel bm = make_beta_binomial_model();
  const VoiEstimate est = evsi_oracle(bm.model, bm.default_design.with_sample_size(0),
                                      WtpThreshold{20000.0}, 2000, 2000, 1);
  CHECK(est.value == 0.0);
  CHECK(*est.mc_se == 0.0);
}

TEST_CASE("oracle: observing all parameters precisely approaches EVPI") {
  const oracles::LinearNormalToy toy;
  const BuiltinModel bm = make_linear_normal_model();
  StudyDesign design;
  design.phi_names = {"phi", "psi"};
  OutcomeSpec x1;
  x1.name = "x1";
  x1.family = SamplingFamily::normal_known_variance;
  x1.linked_parameter = "phi";
  x1.sigma2 = 0.0625;
  OutcomeSpec x2 = x1;
  x2.name = "x2";
  x2.linked_parameter = "psi";
  x2.sigma2 = 100.0;
  design.outcomes = {x1, x2};
  design.sample_size = 100000;
  const VoiEstimate est = evsi_oracle(bm.model, design, WtpThreshold{toy.lambda}, 1000, 400, 3);
  CHECK(std::abs(est.value - toy.evpi()) <= 3.0 * *est.mc_se + 0.01 * toy.evpi());
}

TEST_CASE("oracle: normal-normal closed form at 2000x2000") {
  const oracles::LinearNormalToy toy;
  const BuiltinModel bm = make_linear_normal_model();
  const VoiEstimate est = evsi_oracle(bm.model, bm.default_design.with_sample_size(50),
                                      WtpThreshold{toy.lambda}, 2000, 2000, 7);
  CHECK(oracles::agree_within_3se(est.value, *est.mc_se, toy.evsi(50), 0.0));
}

TEST_CASE("oracle: iteration floor is enforced") {
  const BuiltinModel bm = make_beta_binomial_model();
  CHECK_THROWS_AS(evsi_oracle(bm.model, bm.default_design, WtpThreshold{20000.0}, 50, 2000, 1),
                  Error);
}

TEST_CASE("result serialization") {
  VoiEstimate est;
  est.kind = VoiKind::evsi;
  est.method = "ga";
  est.value = 12.5;
  est.mc_se = 0.25;
  est.design_n = 50;
  const std::string csv = voi_estimates_to_csv({est});
  CHECK(csv.find("method,N,evsi,se") == 0);
  CHECK(csv.find("ga,50,12.5,0.25") != std::string::npos);
  const std::string json = voi_estimates_to_json({est});
  CHECK(json.find("\"method\": \"ga\"") != std::string::npos);
  CHECK(json.find("\"N\": 50") != std::string::npos);
}

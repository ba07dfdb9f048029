#include <doctest.h>

#include <cmath>
#include <numeric>

#include "support/oracles.hpp"
#include "voikit/model.hpp"

using namespace voi;

namespace {

DecisionModel coin_model() {
  DecisionModel m;
  m.parameters = {ParameterSpec{"p", PriorDistribution{PriorFamily::beta, 2.0, 2.0}}};
  m.strategies = {{1, "a"}, {2, "b"}};
  m.evaluate = [](std::span<const double> theta, std::span<double> eff, std::span<double> cost) {
    eff[0] = 0.0;
    cost[0] = 0.0;
    eff[1] = theta[0];
    cost[1] = 100.0;
  };
  return m;
}

OutcomeData real_outcome(SamplingFamily family, std::vector<double> obs, double sigma2 = 1.0) {
  OutcomeData od;
  od.family = family;
  od.n = static_cast<long>(obs.size());
  od.sigma2 = sigma2;
  od.observations = std::move(obs);
  for (double x : od.observations) {
    od.sum += x;
    od.sum_sq += x * x;
  }
  return od;
}

StudyDesign binomial_design(long n) {
  OutcomeSpec o;
  o.name = "x";
  o.family = SamplingFamily::binomial;
  o.linked_parameter = "p";
  return StudyDesign{{"p"}, {o}, n};
}

}  // namespace

TEST_CASE("run_psa is deterministic given (model, S, seed)") {
  const DecisionModel m = coin_model();
  const PsaDataset a = run_psa(m, 10, 7);
  const PsaDataset b = run_psa(m, 10, 7);
  for (std::size_t s = 0; s < 10; ++s) {
    CHECK(a.parameter(0)[s] == b.parameter(0)[s]);
    CHECK(a.effect(1)[s] == b.effect(1)[s]);
  }
  // Thread count must not change the draws either.
  const PsaDataset c = run_psa(m, 10, 7, 4);
  for (std::size_t s = 0; s < 10; ++s) CHECK(a.parameter(0)[s] == c.parameter(0)[s]);
}

TEST_CASE("run_psa prior means converge") {
  const DecisionModel m = coin_model();
  const PsaDataset ds = run_psa(m, 10000, 1);
  const auto& p = ds.parameter("p");
  const double mean = std::accumulate(p.begin(), p.end(), 0.0) / 10000.0;
  CHECK(std::abs(mean - 0.5) < 0.02);
}

TEST_CASE("run_psa column means sit within 4 standard errors of the prior means") {
  const BuiltinModel bm = make_dr_tox_model();
  const std::size_t S = 20000;
  const PsaDataset ds = run_psa(bm.model, S, 99);
  for (std::size_t p = 0; p < bm.model.parameters.size(); ++p) {
    const PriorDistribution& prior = bm.model.parameters[p].prior;
    const auto& col = ds.parameter(p);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / double(S);
    const double se = std::sqrt(prior.variance() / double(S));
    CHECK(std::abs(mean - prior.mean()) < 4.0 * se);
  }
}

TEST_CASE("dr-tox mean costs match a straight-line recomputation") {
  const BuiltinModel bm = make_dr_tox_model();
  const std::size_t S = 1000;
  const PsaDataset ds = run_psa(bm.model, S, 42);
  const double treat[3] = {2000.0, 12000.0, 15000.0};
  for (int t = 0; t < 3; ++t) {
    double expected = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      const double p1 = ds.parameter("p.dr.t1")[s];
      double pdr = p1;
      if (t == 1) pdr = 1.0 - std::pow(1.0 - p1, ds.parameter("hr.dr.t2")[s]);
      if (t == 2) pdr = 1.0 - std::pow(1.0 - p1, ds.parameter("hr.dr.t3")[s]);
      const double ptox = ds.parameter("p.tox.t" + std::to_string(t + 1))[s];
      expected += treat[t] + pdr * ds.parameter("c.dr")[s] + ptox * ds.parameter("c.tox")[s];
    }
    expected /= double(S);
    const auto& cost = ds.cost(t);
    const double actual = std::accumulate(cost.begin(), cost.end(), 0.0) / double(S);
    CHECK(actual == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("run_psa surfaces non-finite model output as an error naming the draw") {
  DecisionModel m = coin_model();
  m.evaluate = [](std::span<const double>, std::span<double> eff, std::span<double> cost) {
    eff[0] = 0.0;
    cost[0] = 0.0;
    eff[1] = std::numeric_limits<double>::quiet_NaN();
    cost[1] = 0.0;
  };
  CHECK_THROWS_AS(run_psa(m, 10, 1), Error);
}

TEST_CASE("simulate_future_dataset boundaries and determinism") {
  const StudyDesign design = binomial_design(25);
  SUBCASE("phi = 0 gives all failures") {
    const double phi[1] = {0.0};
    const FutureDataset x = simulate_future_dataset(design, phi, 5);
    CHECK(x.outcomes[0].count == 0);
  }
  SUBCASE("phi = 1 gives all successes") {
    const double phi[1] = {1.0};
    const FutureDataset x = simulate_future_dataset(design, phi, 5);
    CHECK(x.outcomes[0].count == 25);
  }
  SUBCASE("phi outside the support is a domain error") {
    const double phi[1] = {1.5};
    CHECK_THROWS_AS(simulate_future_dataset(design, phi, 5), Error);
  }
  SUBCASE("seeded draws repeat") {
    const double phi[1] = {0.3};
    const FutureDataset a = simulate_future_dataset(design, phi, 11);
    const FutureDataset b = simulate_future_dataset(design, phi, 11);
    CHECK(a.outcomes[0].count == b.outcomes[0].count);
  }
}

TEST_CASE("normal outcome sample mean obeys the CLT bound") {
  OutcomeSpec o;
  o.name = "y";
  o.family = SamplingFamily::normal_known_variance;
  o.linked_parameter = "mu";
  o.sigma2 = 4.0;
  const StudyDesign design{{"mu"}, {o}, 10000};
  const double phi[1] = {3.0};
  const FutureDataset x = simulate_future_dataset(design, phi, 17);
  const double mean = x.outcomes[0].sum / 10000.0;
  CHECK(std::abs(mean - 3.0) < 0.08);  // 4 standard errors of the mean
}

TEST_CASE("summaries sit on the linked parameter's scale") {
  const StudyDesign design = binomial_design(10);
  SUBCASE("binomial proportion") {
    OutcomeData od;
    od.family = SamplingFamily::binomial;
    od.n = 10;
    od.count = 3;
    FutureDataset x{{od}, {0.3}};
    const SummaryStatistic w = summarize_dataset(design, x);
    CHECK(w.values[0] == 0.3);
    CHECK(w.scales[0] == "proportion");
  }
  SUBCASE("normal mean") {
    OutcomeSpec o;
    o.family = SamplingFamily::normal_known_variance;
    o.linked_parameter = "p";
    const StudyDesign d{{"p"}, {o}, 3};
    FutureDataset x{{real_outcome(SamplingFamily::normal_known_variance, {1.0, 2.0, 3.0})}, {2.0}};
    CHECK(summarize_dataset(d, x).values[0] == 2.0);
  }
  SUBCASE("poisson rate per exposure") {
    OutcomeSpec o;
    o.family = SamplingFamily::poisson;
    o.linked_parameter = "p";
    const StudyDesign d{{"p"}, {o}, 4};
    OutcomeData od;
    od.family = SamplingFamily::poisson;
    od.n = 4;
    od.count = 12;
    od.total_exposure = 4.0;
    FutureDataset x{{od}, {3.0}};
    const SummaryStatistic w = summarize_dataset(d, x);
    CHECK(w.values[0] == 3.0);
    CHECK(w.scales[0] == "rate");
  }
  SUBCASE("empty dataset errors") {
    OutcomeData od;
    od.family = SamplingFamily::binomial;
    od.n = 0;
    FutureDataset x{{od}, {0.3}};
    CHECK_THROWS_AS(summarize_dataset(design, x), Error);
  }
}

TEST_CASE("log likelihood closed forms") {
  const StudyDesign design = binomial_design(2);
  OutcomeData od;
  od.family = SamplingFamily::binomial;
  od.n = 2;
  od.count = 1;
  FutureDataset x{{od}, {0.5}};
  SUBCASE("binomial n=2 x=1 at p=0.5") {
    const double phi[1] = {0.5};
    CHECK(log_likelihood(design, x, phi) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  }
  SUBCASE("x=1 at p=0 underflows to -infinity, not a crash") {
    const double phi[1] = {0.0};
    CHECK(log_likelihood(design, x, phi) == -std::numeric_limits<double>::infinity());
  }
  SUBCASE("probabilities sum to one over the discrete support") {
    const StudyDesign d5 = binomial_design(5);
    const double phi[1] = {0.37};
    double total = 0.0;
    for (long k = 0; k <= 5; ++k) {
      OutcomeData o;
      o.family = SamplingFamily::binomial;
      o.n = 5;
      o.count = k;
      FutureDataset xs{{o}, {0.37}};
      total += std::exp(log_likelihood(d5, xs, phi));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("conjugate updates follow the textbook algebra") {
  SUBCASE("beta-binomial") {
    const ParameterSpec prior{"p", PriorDistribution{PriorFamily::beta, 1.0, 1.0}};
    OutcomeData od;
    od.family = SamplingFamily::binomial;
    od.n = 10;
    od.count = 3;
    const ParameterSpec post = conjugate_update(prior, binomial_design(10), FutureDataset{{od}, {}});
    CHECK(post.prior.a == 4.0);
    CHECK(post.prior.b == 8.0);
  }
  SUBCASE("normal-normal precision weighting") {
    OutcomeSpec o;
    o.family = SamplingFamily::normal_known_variance;
    o.linked_parameter = "mu";
    o.sigma2 = 1.0;
    const StudyDesign d{{"mu"}, {o}, 1};
    const ParameterSpec prior{"mu", PriorDistribution{PriorFamily::normal, 0.0, 1.0}};
    const ParameterSpec post =
        conjugate_update(prior, d, FutureDataset{{real_outcome(o.family, {2.0})}, {}});
    CHECK(post.prior.a == doctest::Approx(1.0));
    CHECK(post.prior.b == doctest::Approx(0.5));
  }
  SUBCASE("gamma-poisson") {
    OutcomeSpec o;
    o.family = SamplingFamily::poisson;
    o.linked_parameter = "rate";
    const StudyDesign d{{"rate"}, {o}, 1};
    OutcomeData od;
    od.family = SamplingFamily::poisson;
    od.n = 1;
    od.count = 5;
    od.total_exposure = 2.0;
    const ParameterSpec prior{"rate", PriorDistribution{PriorFamily::gamma, 2.0, 3.0}};
    const ParameterSpec post = conjugate_update(prior, d, FutureDataset{{od}, {}});
    CHECK(post.prior.a == 7.0);
    CHECK(post.prior.b == 5.0);
  }
  SUBCASE("empty dataset returns the prior unchanged") {
    const ParameterSpec prior{"p", PriorDistribution{PriorFamily::beta, 4.0, 6.0}};
    OutcomeData od;
    od.family = SamplingFamily::binomial;
    od.n = 0;
    const ParameterSpec post = conjugate_update(prior, binomial_design(0), FutureDataset{{od}, {}});
    CHECK(post.prior.a == 4.0);
    CHECK(post.prior.b == 6.0);
  }
  SUBCASE("unsupported pair raises a no-conjugate error") {
    const ParameterSpec prior{"p", PriorDistribution{PriorFamily::log_normal, 0.0, 1.0}};
    OutcomeData od;
    od.family = SamplingFamily::binomial;
    od.n = 10;
    od.count = 3;
    CHECK_THROWS_AS(conjugate_update(prior, binomial_design(10), FutureDataset{{od}, {}}), Error);
  }
  SUBCASE("posterior mean lies strictly between prior mean and sample proportion") {
    const ParameterSpec prior{"p", PriorDistribution{PriorFamily::beta, 4.0, 6.0}};
    for (long successes = 1; successes < 10; ++successes) {
      OutcomeData od;
      od.family = SamplingFamily::binomial;
      od.n = 10;
      od.count = successes;
      const ParameterSpec post =
          conjugate_update(prior, binomial_design(10), FutureDataset{{od}, {}});
      const double prop = double(successes) / 10.0;
      const double lo = std::min(prior.prior.mean(), prop);
      const double hi = std::max(prior.prior.mean(), prop);
      if (lo == hi) continue;
      CHECK(post.prior.mean() > lo);
      CHECK(post.prior.mean() < hi);
    }
  }
}

TEST_CASE("Metropolis fallback reproduces a known conjugate posterior") {
  const PriorDistribution prior{PriorFamily::beta, 2.0, 3.0};
  OutcomeData od;
  od.family = SamplingFamily::binomial;
  od.n = 30;
  od.count = 12;
  auto log_lik = [&](double p) {
    return 12.0 * std::log(p) + 18.0 * std::log1p(-p);
  };
  RngStream rng(5, 0, RngPurpose::metropolis);
  const std::vector<double> chain = metropolis_posterior_sample(prior, log_lik, 40000, 2000, rng);
  double mean = std::accumulate(chain.begin(), chain.end(), 0.0) / double(chain.size());
  // Conjugate truth: Beta(14, 21), mean 0.4.
  CHECK(std::abs(mean - 0.4) < 0.015);
}

TEST_CASE("variance-link normal data updates an inverse-gamma prior") {
  OutcomeSpec o;
  o.family = SamplingFamily::normal_known_variance;
  o.linked_parameter = "v";
  o.links_variance = true;
  o.known_mean = 1.0;
  const StudyDesign d{{"v"}, {o}, 4};
  OutcomeData od = real_outcome(o.family, {2.0, 0.0, 3.0, -1.0});
  od.links_variance = true;
  od.known_mean = 1.0;
  const ParameterSpec prior{"v", PriorDistribution{PriorFamily::inverse_gamma, 3.0, 2.0}};
  const ParameterSpec post = conjugate_update(prior, d, FutureDataset{{od}, {}});
  // Deviations from the known mean: 1, -1, 2, -2 -> SS = 10.
  CHECK(post.prior.a == doctest::Approx(5.0));
  CHECK(post.prior.b == doctest::Approx(7.0));
}

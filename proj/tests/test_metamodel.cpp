#include <doctest.h>

#include <cmath>

#include "voikit/metamodel.hpp"
#include "voikit/rng.hpp"

using namespace voi;

namespace {

std::vector<double> grid_column(std::size_t n, double lo, double hi) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return x;
}

Metamodel fit_at_fixed_penalty(const std::vector<std::vector<double>>& cols,
                               const std::vector<double>& y, double log10_penalty) {
  MetamodelConfig config;
  config.gcv_grid_points = 1;
  config.log10_penalty_min = log10_penalty;
  config.log10_penalty_max = log10_penalty;
  return fit_metamodel(cols, y, config);
}

}  // namespace

TEST_CASE("noise-free linear response is recovered") {
  const std::vector<double> x = grid_column(400, -2.0, 5.0);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 3.0 * x[i] + 1.0;
  const Metamodel m = fit_metamodel({x}, y);
  CHECK(m.stats().r_squared > 0.999999);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(m.fitted()[i] - y[i]) < 1e-6);
}

TEST_CASE("constant response collapses to the intercept") {
  const std::vector<double> x = grid_column(200, 0.0, 1.0);
  const std::vector<double> y(x.size(), 4.25);
  const Metamodel m = fit_metamodel({x}, y);
  CHECK(m.effective_df() == doctest::Approx(1.0));
  const std::vector<double> pred = m.predict({{-3.0, 0.5, 9.0}});
  for (double v : pred) CHECK(v == 4.25);
}

TEST_CASE("sine signal under noise is recovered within RMSE 0.05 for several knot counts") {
  for (int knots : {8, 10, 12}) {
    RngStream rng(314, static_cast<std::uint64_t>(knots), RngPurpose::psa_draw);
    const std::size_t S = 2000;
    std::vector<double> x(S), y(S);
    for (std::size_t i = 0; i < S; ++i) {
      x[i] = rng.uniform();
      y[i] = std::sin(2.0 * 3.14159265358979 * x[i]) + rng.normal(0.0, 0.01);
    }
    MetamodelConfig config;
    config.interior_knots = knots;
    const Metamodel m = fit_metamodel({x}, y, config);
    double sq = 0.0;
    for (std::size_t i = 0; i < S; ++i) {
      const double truth = std::sin(2.0 * 3.14159265358979 * x[i]);
      sq += (m.fitted()[i] - truth) * (m.fitted()[i] - truth);
    }
    CHECK(std::sqrt(sq / double(S)) < 0.05);
  }
}

TEST_CASE("predict on the training inputs returns the stored fitted values exactly") {
  RngStream rng(99, 0, RngPurpose::psa_draw);
  std::vector<double> x(500), y(500);
  for (std::size_t i = 0; i < 500; ++i) {
    x[i] = rng.normal(0.0, 4.0);
    y[i] = x[i] * x[i] + rng.normal(0.0, 0.25);
  }
  const Metamodel m = fit_metamodel({x}, y);
  const std::vector<double> pred = m.predict({x});
  for (std::size_t i = 0; i < 500; ++i) CHECK(pred[i] == m.fitted()[i]);
}

TEST_CASE("fitted mean matches the response mean") {
  RngStream rng(7, 0, RngPurpose::psa_draw);
  std::vector<double> x(800), y(800);
  for (std::size_t i = 0; i < 800; ++i) {
    x[i] = rng.uniform();
    y[i] = 40.0 * x[i] * x[i] * x[i] + rng.normal(0.0, 4.0) + 100.0;
  }
  const Metamodel m = fit_metamodel({x}, y);
  double fitted_mean = 0.0, y_mean = 0.0;
  for (std::size_t i = 0; i < 800; ++i) {
    fitted_mean += m.fitted()[i];
    y_mean += y[i];
  }
  CHECK(fitted_mean / 800.0 == doctest::Approx(y_mean / 800.0).epsilon(1e-9));
}

TEST_CASE("prediction outside the training range extends linearly and is flagged") {
  const std::vector<double> x = grid_column(300, 0.0, 1.0);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::exp(x[i]);
  const Metamodel m = fit_metamodel({x}, y);
  const auto outside = m.predict_detail({{1.2, 1.4, 1.6, -0.2, -0.4}});
  CHECK(outside.extrapolated == 5);
  // Equally spaced points beyond the hull fall on a straight line.
  const double d1 = outside.values[1] - outside.values[0];
  const double d2 = outside.values[2] - outside.values[1];
  CHECK(d1 == doctest::Approx(d2).epsilon(1e-9));
  const auto inside = m.predict_detail({{0.25, 0.75}});
  CHECK(inside.extrapolated == 0);
}

TEST_CASE("dimension limits and constant columns") {
  const std::size_t S = 1200;
  RngStream rng(3, 0, RngPurpose::psa_draw);
  std::vector<std::vector<double>> seven(7, std::vector<double>(S));
  std::vector<double> y(S);
  for (std::size_t i = 0; i < S; ++i) {
    for (auto& col : seven) col[i] = rng.uniform();
    y[i] = seven[0][i];
  }
  CHECK_THROWS_AS(fit_metamodel(seven, y), Error);

  std::vector<std::vector<double>> with_constant = {seven[0], std::vector<double>(S, 2.5)};
  const Metamodel m = fit_metamodel(with_constant, y);
  CHECK_FALSE(m.warnings().empty());
  CHECK(m.stats().r_squared > 0.99);
}

TEST_CASE("too few rows for the basis dimension is refused") {
  const std::vector<double> x = grid_column(60, 0.0, 1.0);
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i];
  CHECK_THROWS_AS(fit_metamodel({x}, y), Error);
}

TEST_CASE("effective degrees of freedom are non-increasing in the penalty") {
  RngStream rng(21, 0, RngPurpose::psa_draw);
  std::vector<double> x(600), y(600);
  for (std::size_t i = 0; i < 600; ++i) {
    x[i] = rng.uniform();
    y[i] = std::sin(6.0 * x[i]) + rng.normal(0.0, 0.04);
  }
  double previous = std::numeric_limits<double>::infinity();
  for (double lp : {-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0}) {
    const Metamodel m = fit_at_fixed_penalty({x}, y, lp);
    CHECK(m.effective_df() <= previous + 1e-9);
    previous = m.effective_df();
  }
}

TEST_CASE("pure-noise responses stay near the intercept-only fit in at least 90% of trials") {
  int near_null = 0;
  const int trials = 20;
  for (int trial = 0; trial < trials; ++trial) {
    RngStream rng(1000 + trial, 0, RngPurpose::psa_draw);
    std::vector<double> x(500), y(500);
    for (std::size_t i = 0; i < 500; ++i) {
      x[i] = rng.uniform();
      y[i] = rng.normal(0.0, 1.0);
    }
    const Metamodel m = fit_metamodel({x}, y);
    if (m.effective_df() <= 3.0) ++near_null;
  }
  CHECK(near_null >= 18);
}

TEST_CASE("diagnostics") {
  SUBCASE("exact linear fit passes") {
    const std::vector<double> x = grid_column(300, 0.0, 2.0);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = 2.0 * x[i] - 1.0;
    const Metamodel m = fit_metamodel({x}, y);
    const MetamodelReport rep = residual_diagnostics(m);
    CHECK(rep.status == DiagnosticStatus::pass);
    CHECK(std::abs(rep.residual_fitted_corr) < 0.05);
  }
  SUBCASE("unmodeled multiplicative covariate raises a WARN") {
    RngStream rng(55, 0, RngPurpose::psa_draw);
    const std::size_t S = 2000;
    std::vector<double> x1(S), y(S);
    for (std::size_t i = 0; i < S; ++i) {
      x1[i] = rng.uniform();
      const double x2 = rng.normal(1.0, 1.0);
      y[i] = x1[i] * x2;
    }
    const Metamodel m = fit_metamodel({x1}, y);
    const MetamodelReport rep = residual_diagnostics(m);
    CHECK(rep.status == DiagnosticStatus::warn);
    CHECK(rep.het_r2 > Metamodel::kWarnHetR2);
  }
  SUBCASE("heavy-tailed noise produces standardized-residual outliers") {
    RngStream rng(66, 0, RngPurpose::psa_draw);
    const std::size_t S = 1500;
    std::vector<double> x(S), y(S);
    for (std::size_t i = 0; i < S; ++i) {
      x[i] = rng.uniform();
      // t(2)-style noise: normal over sqrt of a chi-square(2)/2.
      const double z1 = rng.normal();
      const double chi = rng.gamma(1.0, 1.0);
      y[i] = x[i] + z1 / std::sqrt(chi);
    }
    const Metamodel m = fit_metamodel({x}, y);
    CHECK(residual_diagnostics(m).outlier_count > 0);
  }
}

TEST_CASE("component profile dumps are finite and span the training range") {
  const std::vector<double> x = grid_column(300, -1.0, 3.0);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * x[i];
  const Metamodel m = fit_metamodel({x}, y);
  const auto profile = m.component_profile(0, 51);
  REQUIRE(profile.size() == 51);
  CHECK(profile.front().first == -1.0);
  CHECK(profile.back().first == 3.0);
  for (const auto& [xi, fi] : profile) CHECK(std::isfinite(fi));
}

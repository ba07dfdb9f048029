#ifndef VOIKIT_METAMODEL_HPP
#define VOIKIT_METAMODEL_HPP

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "voikit/common.hpp"

namespace voi {

struct MetamodelConfig {
  int interior_knots = 10;       // cubic B-spline interior knots per covariate
  int gcv_grid_points = 41;      // log-spaced penalty grid
  double log10_penalty_min = -6.0;
  double log10_penalty_max = 6.0;
  int gcv_sweeps = 2;            // coordinate-descent passes when d > 1
  int max_dimension = 6;         // flexible regression becomes unreliable beyond this
};

enum class DiagnosticStatus { pass, warn, fail };

std::string to_string(DiagnosticStatus status);

struct MetamodelReport {
  double residual_mean = 0.0;
  double residual_fitted_corr = 0.0;
  double bp_score = 0.0;   // Breusch-Pagan-style LM statistic, S * R^2 of resid^2 on fitted
  double het_r2 = 0.0;     // the scale-free auxiliary R^2 behind bp_score
  long outlier_count = 0;  // |standardized residual| > 4
  DiagnosticStatus status = DiagnosticStatus::pass;
  std::vector<std::string> notes;
};

struct FitStats {
  double r_squared = 0.0;
  double residual_mean = 0.0;
  double residual_fitted_corr = 0.0;
  double effective_df = 0.0;
};

// Additive penalized-spline model y = b0 + sum_j f_j(x_j). Each f_j is a cubic
// B-spline expansion with an integrated-squared-second-derivative penalty whose
// weight is picked by GCV. Immutable once fitted.
class Metamodel {
 public:
  // Diagnostic thresholds (documented contract):
  //   warn when |residual mean| >= 1e-8 * sd(y), |corr(resid, fitted)| >= 0.05,
  //   or the heteroscedasticity R^2 exceeds 0.10; fail when |corr| > 0.25.
  static constexpr double kWarnResidualMeanFactor = 1e-8;
  static constexpr double kWarnCorr = 0.05;
  static constexpr double kFailCorr = 0.25;
  static constexpr double kWarnHetR2 = 0.10;

  std::size_t input_dimension() const { return covariates_.size(); }
  const std::vector<double>& fitted() const { return fitted_; }
  const FitStats& stats() const { return stats_; }
  const MetamodelReport& report() const { return report_; }
  double effective_df() const { return stats_.effective_df; }
  double response_mean() const { return response_mean_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  double penalty_weight(std::size_t covariate) const { return covariates_[covariate].penalty_weight; }

  std::vector<double> predict(const std::vector<std::vector<double>>& covariate_columns) const;

  struct Prediction {
    std::vector<double> values;
    std::size_t extrapolated = 0;  // rows outside the training range (linear tails)
  };
  Prediction predict_detail(const std::vector<std::vector<double>>& covariate_columns) const;

  // Re-solves the coefficients on a row resample with knots and smoothing
  // weights frozen, returning fitted values for those rows. Bootstrap support.
  std::vector<double> refit_fitted_on_rows(const std::vector<std::size_t>& rows) const;

  // Samples of one fitted component f_j on a grid (CSV dump support).
  std::vector<std::pair<double, double>> component_profile(std::size_t covariate,
                                                           std::size_t points = 101) const;

 private:
  friend Metamodel fit_metamodel(const std::vector<std::vector<double>>& covariate_columns,
                                 const std::vector<double>& response, const MetamodelConfig& config);

  struct CovariateBasis {
    double lo = 0.0, hi = 1.0;        // affine map to [0, 1]
    std::vector<double> knots;        // full knot vector on [0, 1]
    Eigen::MatrixXd constraint;       // sum-to-zero reparameterization, p x (p-1)
    double penalty_weight = 1.0;
    bool dropped = false;             // constant training column
    int basis_dim() const { return static_cast<int>(knots.size()) - 4; }
  };

  // Evaluates one covariate's constrained basis row at raw value x, with the
  // linear tail extension outside the training range. Returns true when the
  // point was extrapolated.
  bool basis_row(std::size_t j, double x, Eigen::VectorXd& out) const;
  double eval_row(const double* values, const std::vector<std::vector<double>>& columns,
                  std::size_t row, bool& extrapolated) const;

  std::vector<CovariateBasis> covariates_;
  Eigen::VectorXd coefficients_;  // intercept first, then per-covariate blocks
  Eigen::MatrixXd design_;        // training design matrix (bootstrap refits)
  Eigen::VectorXd response_;
  std::vector<double> fitted_;
  double response_mean_ = 0.0;
  FitStats stats_;
  MetamodelReport report_;
  std::vector<std::string> warnings_;
};

// Fits the additive model. covariate_columns holds d columns of length S.
// Constant columns are dropped with a warning; more than max_dimension live
// covariates is refused (group parameters or summaries before fitting).
Metamodel fit_metamodel(const std::vector<std::vector<double>>& covariate_columns,
                        const std::vector<double>& response, const MetamodelConfig& config = {});

MetamodelReport residual_diagnostics(const Metamodel& model);

}  // namespace voi

#endif  // VOIKIT_METAMODEL_HPP

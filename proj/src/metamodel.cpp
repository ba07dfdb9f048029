#include "voikit/metamodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace voi {

std::string to_string(DiagnosticStatus status) {
  switch (status) {
    case DiagnosticStatus::pass: return "PASS";
    case DiagnosticStatus::warn: return "WARN";
    case DiagnosticStatus::fail: return "FAIL";
  }
  return "?";
}

namespace {

// All B-spline basis values and first/second derivatives at u for a cubic
// basis over the given knot vector. Output arrays have size nknots - 4.
void bspline_eval(const std::vector<double>& knots, double u, std::vector<double>& value,
                  std::vector<double>& d1, std::vector<double>& d2) {
  const int m = static_cast<int>(knots.size());
  const int p = m - 4;
  value.assign(p, 0.0);
  d1.assign(p, 0.0);
  d2.assign(p, 0.0);

  // Order-1 indicators, closing the last non-degenerate interval at u = 1.
  std::vector<double> n1(m - 1, 0.0);
  int last = -1;
  for (int i = 0; i < m - 1; ++i)
    if (knots[i + 1] > knots[i]) last = i;
  for (int i = 0; i < m - 1; ++i) {
    if (u >= knots[i] && u < knots[i + 1]) n1[i] = 1.0;
  }
  if (u >= knots[m - 1] && last >= 0) n1[last] = 1.0;

  std::vector<double> n2(m - 2, 0.0), n3(m - 3, 0.0);
  for (int i = 0; i < m - 2; ++i) {
    const double den1 = knots[i + 1] - knots[i];
    const double den2 = knots[i + 2] - knots[i + 1];
    double v = 0.0;
    if (den1 > 0.0) v += (u - knots[i]) / den1 * n1[i];
    if (den2 > 0.0) v += (knots[i + 2] - u) / den2 * n1[i + 1];
    n2[i] = v;
  }
  for (int i = 0; i < m - 3; ++i) {
    const double den1 = knots[i + 2] - knots[i];
    const double den2 = knots[i + 3] - knots[i + 1];
    double v = 0.0;
    if (den1 > 0.0) v += (u - knots[i]) / den1 * n2[i];
    if (den2 > 0.0) v += (knots[i + 3] - u) / den2 * n2[i + 1];
    n3[i] = v;
  }
  std::vector<double> d3(m - 3, 0.0);  // first derivative of the order-3 basis
  for (int i = 0; i < m - 3; ++i) {
    const double den1 = knots[i + 2] - knots[i];
    const double den2 = knots[i + 3] - knots[i + 1];
    double v = 0.0;
    if (den1 > 0.0) v += 2.0 * n2[i] / den1;
    if (den2 > 0.0) v -= 2.0 * n2[i + 1] / den2;
    d3[i] = v;
  }
  for (int i = 0; i < p; ++i) {
    const double den1 = knots[i + 3] - knots[i];
    const double den2 = knots[i + 4] - knots[i + 1];
    double v = 0.0;
    if (den1 > 0.0) v += (u - knots[i]) / den1 * n3[i];
    if (den2 > 0.0) v += (knots[i + 4] - u) / den2 * n3[i + 1];
    value[i] = v;
    double g = 0.0;
    if (den1 > 0.0) g += 3.0 * n3[i] / den1;
    if (den2 > 0.0) g -= 3.0 * n3[i + 1] / den2;
    d1[i] = g;
    double h = 0.0;
    if (den1 > 0.0) h += 3.0 * d3[i] / den1;
    if (den2 > 0.0) h -= 3.0 * d3[i + 1] / den2;
    d2[i] = h;
  }
}

// Integrated squared second derivative, exact for cubics via 2-point Gauss
// rule per knot span.
Eigen::MatrixXd curvature_penalty(const std::vector<double>& knots) {
  const int p = static_cast<int>(knots.size()) - 4;
  Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(p, p);
  std::vector<double> value, d1, d2;
  const double g = 1.0 / std::sqrt(3.0);
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double a = knots[i], b = knots[i + 1];
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (double sign : {-1.0, 1.0}) {
      bspline_eval(knots, mid + sign * g * half, value, d1, d2);
      for (int r = 0; r < p; ++r) {
        if (d2[r] == 0.0) continue;
        for (int c = 0; c < p; ++c) pen(r, c) += half * d2[r] * d2[c];
      }
    }
  }
  return pen;
}

double quantile_type7(std::vector<double> sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

double pearson_corr(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const double mx = x.mean(), my = y.mean();
  const Eigen::VectorXd dx = x.array() - mx;
  const Eigen::VectorXd dy = y.array() - my;
  const double sx = dx.norm(), sy = dy.norm();
  if (sx <= 0.0 || sy <= 0.0) return 0.0;
  return dx.dot(dy) / (sx * sy);
}

}  // namespace

bool Metamodel::basis_row(std::size_t j, double x, Eigen::VectorXd& out) const {
  const CovariateBasis& cb = covariates_[j];
  const double scale = cb.hi - cb.lo;
  double u = (x - cb.lo) / scale;
  bool extrapolated = false;
  std::vector<double> value, d1, d2;
  if (u < 0.0 || u > 1.0) {
    extrapolated = true;
    const double edge = u < 0.0 ? 0.0 : 1.0;
    bspline_eval(cb.knots, edge, value, d1, d2);
    for (std::size_t i = 0; i < value.size(); ++i) value[i] += (u - edge) * d1[i];
  } else {
    bspline_eval(cb.knots, u, value, d1, d2);
  }
  const Eigen::Map<const Eigen::VectorXd> raw(value.data(), static_cast<long>(value.size()));
  out = cb.constraint.transpose() * raw;
  return extrapolated;
}

double Metamodel::eval_row(const double*, const std::vector<std::vector<double>>& columns,
                           std::size_t row, bool& extrapolated) const {
  double acc = coefficients_[0];
  long offset = 1;
  Eigen::VectorXd block;
  for (std::size_t j = 0; j < covariates_.size(); ++j) {
    const CovariateBasis& cb = covariates_[j];
    if (cb.dropped) continue;
    const int dim = cb.basis_dim() - 1;
    if (basis_row(j, columns[j][row], block)) extrapolated = true;
    acc += block.dot(coefficients_.segment(offset, dim));
    offset += dim;
  }
  return acc;
}

std::vector<double> Metamodel::predict(const std::vector<std::vector<double>>& covariate_columns) const {
  return predict_detail(covariate_columns).values;
}

Metamodel::Prediction Metamodel::predict_detail(
    const std::vector<std::vector<double>>& covariate_columns) const {
  if (covariate_columns.size() != covariates_.size())
    throw argument_error("prediction covariate dimension mismatch: got " +
                         std::to_string(covariate_columns.size()) + ", expected " +
                         std::to_string(covariates_.size()));
  const std::size_t n = covariate_columns.empty() ? 0 : covariate_columns[0].size();
  for (const auto& col : covariate_columns)
    if (col.size() != n) throw argument_error("prediction covariate columns differ in length");
  Prediction pred;
  pred.values.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    bool ex = false;
    pred.values[r] = eval_row(nullptr, covariate_columns, r, ex);
    if (ex) ++pred.extrapolated;
  }
  return pred;
}

std::vector<double> Metamodel::refit_fitted_on_rows(const std::vector<std::size_t>& rows) const {
  const long p = design_.cols();
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
  for (std::size_t r : rows) {
    const Eigen::VectorXd x = design_.row(static_cast<long>(r)).transpose();
    xtx.noalias() += x * x.transpose();
    xty.noalias() += x * response_[static_cast<long>(r)];
  }
  // Same penalty block structure as the original fit, weights frozen.
  long offset = 1;
  for (const auto& cb : covariates_) {
    if (cb.dropped) continue;
    const int dim = cb.basis_dim() - 1;
    const Eigen::MatrixXd pen =
        cb.constraint.transpose() * curvature_penalty(cb.knots) * cb.constraint;
    xtx.block(offset, offset, dim, dim) += cb.penalty_weight * pen;
    offset += dim;
  }
  const Eigen::VectorXd beta = xtx.ldlt().solve(xty);
  std::vector<double> fitted(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    fitted[i] = design_.row(static_cast<long>(rows[i])).dot(beta);
  return fitted;
}

std::vector<std::pair<double, double>> Metamodel::component_profile(std::size_t covariate,
                                                                    std::size_t points) const {
  if (covariate >= covariates_.size()) throw argument_error("covariate index out of range");
  const CovariateBasis& cb = covariates_[covariate];
  std::vector<std::pair<double, double>> profile;
  if (cb.dropped) return profile;
  long offset = 1;
  for (std::size_t j = 0; j < covariate; ++j)
    if (!covariates_[j].dropped) offset += covariates_[j].basis_dim() - 1;
  Eigen::VectorXd block;
  for (std::size_t i = 0; i < points; ++i) {
    const double x = cb.lo + (cb.hi - cb.lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    basis_row(covariate, x, block);
    profile.emplace_back(x, block.dot(coefficients_.segment(offset, cb.basis_dim() - 1)));
  }
  return profile;
}

Metamodel fit_metamodel(const std::vector<std::vector<double>>& covariate_columns,
                        const std::vector<double>& response, const MetamodelConfig& config) {
  if (covariate_columns.empty()) throw argument_error("need at least one covariate");
  const std::size_t S = response.size();
  for (const auto& col : covariate_columns)
    if (col.size() != S) throw argument_error("covariate/response length mismatch");
  if (S < 2) throw argument_error("need at least two rows");

  Metamodel m;
  m.response_ = Eigen::Map<const Eigen::VectorXd>(response.data(), static_cast<long>(S));
  m.response_mean_ = m.response_.mean();

  // Drop constant columns; refuse dimensions beyond the flexible-regression limit.
  std::size_t live = 0;
  m.covariates_.resize(covariate_columns.size());
  for (std::size_t j = 0; j < covariate_columns.size(); ++j) {
    const auto [mn, mx] = std::minmax_element(covariate_columns[j].begin(), covariate_columns[j].end());
    const double span = *mx - *mn;
    auto& cb = m.covariates_[j];
    cb.lo = *mn;
    cb.hi = *mx;
    if (!(span > 1e-12 * std::max(1.0, std::abs(*mx)))) {
      cb.dropped = true;
      m.warnings_.push_back("covariate " + std::to_string(j + 1) + " is constant and was dropped");
    } else {
      ++live;
    }
  }
  if (live > static_cast<std::size_t>(config.max_dimension))
    throw dimension_error("flexible regression with " + std::to_string(live) +
                          " covariates is unreliable beyond " + std::to_string(config.max_dimension) +
                          "; group parameters or reduce the summary dimension");

  // Intercept-only fallback when no covariate varies or the response is
  // constant (any smoothing level fits it; report the degenerate model).
  const double response_tss = (m.response_.array() - m.response_mean_).matrix().squaredNorm();
  if (response_tss == 0.0 && live > 0) {
    for (auto& cb : m.covariates_) cb.dropped = true;
    m.warnings_.push_back("response is constant; intercept-only fit");
    live = 0;
  }
  if (live == 0) {
    m.coefficients_ = Eigen::VectorXd::Constant(1, m.response_mean_);
    m.design_ = Eigen::MatrixXd::Ones(static_cast<long>(S), 1);
    m.fitted_.assign(S, m.response_mean_);
    m.stats_.effective_df = 1.0;
    m.stats_.r_squared = response_tss > 0.0 ? 0.0 : 1.0;
    m.report_.status = response_tss > 0.0 ? DiagnosticStatus::warn : DiagnosticStatus::pass;
    for (const auto& w : m.warnings_) m.report_.notes.push_back(w);
    return m;
  }

  // Knots at quantiles of each covariate mapped to [0, 1].
  long total_basis_dim = 0;
  for (std::size_t j = 0; j < covariate_columns.size(); ++j) {
    auto& cb = m.covariates_[j];
    if (cb.dropped) continue;
    std::vector<double> sorted(covariate_columns[j]);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> interior;
    for (int i = 1; i <= config.interior_knots; ++i) {
      const double q = static_cast<double>(i) / (config.interior_knots + 1.0);
      const double u = (quantile_type7(sorted, q) - cb.lo) / (cb.hi - cb.lo);
      if (u <= 1e-9 || u >= 1.0 - 1e-9) continue;
      if (!interior.empty() && u <= interior.back() + 1e-9) continue;
      interior.push_back(u);
    }
    cb.knots.assign(4, 0.0);
    cb.knots.insert(cb.knots.end(), interior.begin(), interior.end());
    cb.knots.insert(cb.knots.end(), 4, 1.0);
    total_basis_dim += cb.basis_dim();
  }
  if (static_cast<long>(S) <= 10 * total_basis_dim)
    throw validation_error("need S > 10 x total basis dimension (" + std::to_string(10 * total_basis_dim) +
                           ") rows; got " + std::to_string(S));

  // Sum-to-zero constraint per covariate block, removed by a Householder basis
  // of the nullspace of the column-mean vector.
  std::vector<Eigen::MatrixXd> penalties;
  long p_total = 1;
  for (std::size_t j = 0; j < covariate_columns.size(); ++j) {
    auto& cb = m.covariates_[j];
    if (cb.dropped) continue;
    const int p = cb.basis_dim();
    Eigen::MatrixXd basis(static_cast<long>(S), p);
    std::vector<double> value, d1, d2;
    for (std::size_t r = 0; r < S; ++r) {
      const double u = (covariate_columns[j][r] - cb.lo) / (cb.hi - cb.lo);
      bspline_eval(cb.knots, u, value, d1, d2);
      for (int c = 0; c < p; ++c) basis(static_cast<long>(r), c) = value[c];
    }
    Eigen::VectorXd colmean = basis.colwise().mean().transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(colmean);
    Eigen::MatrixXd q = qr.householderQ();
    cb.constraint = q.rightCols(p - 1);
    penalties.push_back(cb.constraint.transpose() * curvature_penalty(cb.knots) * cb.constraint);
    p_total += p - 1;
  }

  // Assemble the design matrix through the same row evaluator predictions use.
  Eigen::MatrixXd X(static_cast<long>(S), p_total);
  X.col(0).setOnes();
  {
    Eigen::VectorXd block;
    long offset = 1;
    for (std::size_t j = 0; j < covariate_columns.size(); ++j) {
      const auto& cb = m.covariates_[j];
      if (cb.dropped) continue;
      const int dim = cb.basis_dim() - 1;
      for (std::size_t r = 0; r < S; ++r) {
        m.basis_row(j, covariate_columns[j][r], block);
        X.block(static_cast<long>(r), offset, 1, dim) = block.transpose();
      }
      offset += dim;
    }
  }

  const Eigen::MatrixXd xtx = X.transpose() * X;
  const Eigen::VectorXd xty = X.transpose() * m.response_;
  const double yty = m.response_.squaredNorm();

  struct Solve {
    double gcv = 0.0;
    double edf = 0.0;
    Eigen::VectorXd beta;
  };
  auto solve_at = [&](const std::vector<double>& weights) {
    Eigen::MatrixXd mpen = xtx;
    long offset = 1;
    std::size_t which = 0;
    for (std::size_t j = 0; j < covariate_columns.size(); ++j) {
      const auto& cb = m.covariates_[j];
      if (cb.dropped) continue;
      const int dim = cb.basis_dim() - 1;
      mpen.block(offset, offset, dim, dim) += weights[which] * penalties[which];
      offset += dim;
      ++which;
    }
    Solve out;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(mpen);
    out.beta = ldlt.solve(xty);
    const double rss =
        std::max(0.0, yty - 2.0 * out.beta.dot(xty) + out.beta.dot(xtx * out.beta));
    out.edf = ldlt.solve(xtx).trace();
    const double denom = static_cast<double>(S) - out.edf;
    out.gcv = denom > 0.0 ? static_cast<double>(S) * rss / (denom * denom)
                          : std::numeric_limits<double>::infinity();
    return out;
  };

  // Scanned from the heaviest penalty down so GCV ties resolve to the
  // smoothest candidate.
  std::vector<double> grid(static_cast<std::size_t>(config.gcv_grid_points));
  for (int i = 0; i < config.gcv_grid_points; ++i) {
    const double t = config.gcv_grid_points == 1
                         ? config.log10_penalty_min
                         : config.log10_penalty_max -
                               (config.log10_penalty_max - config.log10_penalty_min) * i /
                                   (config.gcv_grid_points - 1.0);
    grid[static_cast<std::size_t>(i)] = std::pow(10.0, t);
  }

  std::vector<double> weights(penalties.size(), 1.0);
  const int sweeps = penalties.size() == 1 ? 1 : config.gcv_sweeps;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (std::size_t j = 0; j < weights.size(); ++j) {
      double best_gcv = std::numeric_limits<double>::infinity();
      double best_w = weights[j];
      for (double w : grid) {
        weights[j] = w;
        const Solve s = solve_at(weights);
        if (s.gcv < best_gcv) {
          best_gcv = s.gcv;
          best_w = w;
        }
      }
      weights[j] = best_w;
    }
  }

  const Solve final = solve_at(weights);
  m.coefficients_ = final.beta;
  m.design_ = std::move(X);
  {
    std::size_t which = 0;
    for (auto& cb : m.covariates_) {
      if (cb.dropped) continue;
      cb.penalty_weight = weights[which++];
    }
  }

  if (!final.beta.allFinite())
    throw numeric_error("penalized normal equations produced non-finite coefficients (rank-deficient design)");

  // Fitted values via the prediction path so predict() on training inputs
  // reproduces them bit-for-bit.
  m.fitted_.resize(S);
  for (std::size_t r = 0; r < S; ++r) {
    bool ex = false;
    m.fitted_[r] = m.eval_row(nullptr, covariate_columns, r, ex);
  }

  const Eigen::Map<const Eigen::VectorXd> fitted(m.fitted_.data(), static_cast<long>(S));
  const Eigen::VectorXd resid = m.response_ - fitted;
  const double tss = (m.response_.array() - m.response_mean_).matrix().squaredNorm();
  const double rss = resid.squaredNorm();
  m.stats_.r_squared = tss > 0.0 ? std::clamp(1.0 - rss / tss, 0.0, 1.0) : 1.0;
  m.stats_.residual_mean = resid.mean();
  m.stats_.residual_fitted_corr = pearson_corr(resid, fitted);
  m.stats_.effective_df = final.edf;

  MetamodelReport& rep = m.report_;
  rep.residual_mean = m.stats_.residual_mean;
  rep.residual_fitted_corr = m.stats_.residual_fitted_corr;
  const Eigen::VectorXd resid_sq = resid.array().square();
  rep.het_r2 = std::pow(pearson_corr(resid_sq, fitted), 2);
  rep.bp_score = static_cast<double>(S) * rep.het_r2;
  const double resid_sd = std::sqrt(rss / std::max<double>(1.0, static_cast<double>(S) - final.edf));
  rep.outlier_count = 0;
  if (resid_sd > 0.0)
    for (long i = 0; i < resid.size(); ++i)
      if (std::abs(resid[i]) > 4.0 * resid_sd) ++rep.outlier_count;

  const double y_sd = std::sqrt(tss / std::max<double>(1.0, static_cast<double>(S) - 1.0));
  rep.status = DiagnosticStatus::pass;
  if (std::abs(rep.residual_mean) >= Metamodel::kWarnResidualMeanFactor * y_sd && y_sd > 0.0) {
    rep.status = DiagnosticStatus::warn;
    rep.notes.push_back("residual mean exceeds 1e-8 x response sd");
  }
  if (std::abs(rep.residual_fitted_corr) >= Metamodel::kWarnCorr) {
    rep.status = DiagnosticStatus::warn;
    rep.notes.push_back("residual-vs-fitted correlation exceeds 0.05");
  }
  if (rep.het_r2 > Metamodel::kWarnHetR2) {
    rep.status = DiagnosticStatus::warn;
    rep.notes.push_back("heteroscedasticity R^2 exceeds 0.10");
  }
  if (!std::isfinite(rep.residual_fitted_corr) ||
      std::abs(rep.residual_fitted_corr) > Metamodel::kFailCorr) {
    rep.status = DiagnosticStatus::fail;
    rep.notes.push_back("residual-vs-fitted correlation exceeds 0.25");
  }
  for (const auto& w : m.warnings_) rep.notes.push_back(w);
  return m;
}

MetamodelReport residual_diagnostics(const Metamodel& model) { return model.report(); }

}  // namespace voi

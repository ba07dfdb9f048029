#include "voikit/psa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace voi {

PsaDataset::PsaDataset(std::vector<std::string> parameter_names,
                       std::vector<Strategy> strategies,
                       std::vector<std::vector<double>> parameters,
                       std::vector<std::vector<double>> effects,
                       std::vector<std::vector<double>> costs)
    : parameter_names_(std::move(parameter_names)),
      strategies_(std::move(strategies)),
      parameters_(std::move(parameters)),
      effects_(std::move(effects)),
      costs_(std::move(costs)) {
  rows_ = effects_.empty() ? 0 : effects_[0].size();
  validate();
}

void PsaDataset::validate() const {
  if (strategies_.size() < 2) throw validation_error("at least 2 strategies required");
  for (std::size_t t = 0; t < strategies_.size(); ++t) {
    if (strategies_[t].index != static_cast<int>(t) + 1)
      throw validation_error("strategy indices must be contiguous 1..T");
  }
  if (rows_ < 2) throw validation_error("S >= 2 required");
  if (parameters_.size() != parameter_names_.size())
    throw validation_error("parameter column count does not match names");
  if (effects_.size() != strategies_.size() || costs_.size() != strategies_.size())
    throw validation_error("effect/cost column count does not match strategies");
  std::set<std::string> seen(parameter_names_.begin(), parameter_names_.end());
  if (seen.size() != parameter_names_.size()) throw schema_error("duplicate parameter name");
  auto check = [this](const std::vector<std::vector<double>>& cols, const char* what) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (cols[c].size() != rows_) throw validation_error(std::string(what) + " column length mismatch");
      for (std::size_t s = 0; s < rows_; ++s) {
        if (!std::isfinite(cols[c][s]))
          throw validation_error(std::string("non-finite ") + what + " value at row " + std::to_string(s + 1));
      }
    }
  };
  check(parameters_, "parameter");
  check(effects_, "effect");
  check(costs_, "cost");
}

const std::vector<double>& PsaDataset::parameter(const std::string& name) const {
  return parameters_[parameter_index(name)];
}

std::size_t PsaDataset::parameter_index(const std::string& name) const {
  for (std::size_t p = 0; p < parameter_names_.size(); ++p)
    if (parameter_names_[p] == name) return p;
  throw argument_error("unknown parameter '" + name + "'");
}

bool PsaDataset::has_parameter(const std::string& name) const {
  return std::find(parameter_names_.begin(), parameter_names_.end(), name) != parameter_names_.end();
}

std::vector<std::string> PsaDataset::outcome_names() const {
  std::vector<std::string> names;
  for (std::size_t t = 0; t < strategies_.size(); ++t) {
    names.push_back("qaly.t" + std::to_string(t + 1));
    names.push_back("cost.t" + std::to_string(t + 1));
  }
  return names;
}

std::size_t AugmentedPsaDataset::reference_strategy() const {
  return choose_reference_strategy(nmb);
}

NetBenefitMatrix compute_net_benefit(const PsaDataset& ds, WtpThreshold lambda) {
  if (!(lambda.lambda > 0.0)) throw argument_error("willingness-to-pay threshold must be > 0");
  NetBenefitMatrix nb;
  nb.threshold = lambda;
  nb.values = Matrix(ds.rows(), ds.n_strategies());
  for (std::size_t t = 0; t < ds.n_strategies(); ++t) {
    const auto& e = ds.effect(t);
    const auto& c = ds.cost(t);
    for (std::size_t s = 0; s < ds.rows(); ++s) {
      const double v = lambda.lambda * e[s] - c[s];
      if (!std::isfinite(v))
        throw numeric_error("non-finite net benefit at row " + std::to_string(s + 1));
      nb.values.at(s, t) = v;
    }
  }
  return nb;
}

std::size_t choose_reference_strategy(const Matrix& nb) {
  std::size_t best = 0;
  double best_mean = nb.column_mean(0);
  for (std::size_t t = 1; t < nb.cols(); ++t) {
    const double m = nb.column_mean(t);
    if (m > best_mean) {
      best_mean = m;
      best = t;
    }
  }
  return best;
}

IncrementalNetBenefitMatrix compute_incremental_net_benefit(const NetBenefitMatrix& nb,
                                                            std::optional<std::size_t> reference) {
  IncrementalNetBenefitMatrix inb;
  inb.reference = reference.value_or(choose_reference_strategy(nb.values));
  if (inb.reference >= nb.values.cols()) throw argument_error("reference strategy out of range");
  inb.values = Matrix(nb.values.rows(), nb.values.cols());
  for (std::size_t s = 0; s < nb.values.rows(); ++s) {
    const double ref = nb.values.at(s, inb.reference);
    for (std::size_t t = 0; t < nb.values.cols(); ++t)
      inb.values.at(s, t) = t == inb.reference ? 0.0 : nb.values.at(s, t) - ref;
  }
  return inb;
}

VoiEstimate evpi(const NetBenefitMatrix& nb) {
  VoiEstimate est;
  est.kind = VoiKind::evpi;
  est.method = "psa";
  double se = 0.0;
  est.value = clamp_voi(max_gain_estimate(nb.values, &se), est.diagnostics);
  est.mc_se = se;
  return est;
}

DecisionUncertaintyCurves decision_uncertainty_curves(const PsaDataset& ds,
                                                      const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw argument_error("lambda list must be non-empty");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0)) throw argument_error("lambdas must be > 0");
    if (i > 0 && !(lambdas[i] > lambdas[i - 1])) throw argument_error("lambdas must be strictly increasing");
  }
  const std::size_t T = ds.n_strategies();
  const std::size_t S = ds.rows();
  DecisionUncertaintyCurves curves;
  curves.thresholds = lambdas;
  curves.ceac = Matrix(lambdas.size(), T);
  curves.elc = Matrix(lambdas.size(), T);
  curves.ceaf.resize(lambdas.size());
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    const NetBenefitMatrix nb = compute_net_benefit(ds, WtpThreshold{lambdas[l]});
    std::vector<std::size_t> wins(T, 0);
    std::vector<double> loss_sum(T, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      std::size_t arg = 0;
      double best = nb.values.at(s, 0);
      for (std::size_t t = 1; t < T; ++t) {
        if (nb.values.at(s, t) > best) {  // ties stay with the lowest index
          best = nb.values.at(s, t);
          arg = t;
        }
      }
      ++wins[arg];
      for (std::size_t t = 0; t < T; ++t) loss_sum[t] += best - nb.values.at(s, t);
    }
    for (std::size_t t = 0; t < T; ++t) {
      curves.ceac.at(l, t) = static_cast<double>(wins[t]) / static_cast<double>(S);
      curves.elc.at(l, t) = loss_sum[t] / static_cast<double>(S);
    }
    curves.ceaf[l] = choose_reference_strategy(nb.values);
  }
  return curves;
}

// --- CSV persistence ---

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  cells.push_back(cell);
  return cells;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string s = trim(raw);
  if (!s.empty()) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin + s.size()) return v;
  }
  throw parse_error("non-numeric cell '" + raw + "' at row " + std::to_string(row) +
                    ", column '" + column + "'");
}

// Returns the strategy number k if name is prefix.t<k>, else 0.
int match_strategy_column(const std::string& name, const std::string& prefix) {
  const std::string want = prefix + ".t";
  if (name.size() <= want.size() || name.compare(0, want.size(), want) != 0) return 0;
  int k = 0;
  for (std::size_t i = want.size(); i < name.size(); ++i) {
    if (name[i] < '0' || name[i] > '9') return 0;
    k = k * 10 + (name[i] - '0');
  }
  return k;
}

}  // namespace

LoadedDataset load_psa_dataset(std::istream& in) {
  std::string header_line;
  if (!std::getline(in, header_line)) throw format_error("missing header row");
  const std::vector<std::string> header = split_csv_line(header_line);
  std::vector<std::string> names(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) names[i] = trim(header[i]);
  {
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (n.empty()) throw schema_error("empty column name in header");
      if (!seen.insert(n).second) throw schema_error("duplicate column name '" + n + "'");
    }
  }

  enum class Role { sim, parameter, effect, cost, nmb, eta };
  struct Column {
    Role role;
    int strategy = 0;  // 1-based for strategy-linked columns
  };
  std::vector<Column> columns(names.size());
  std::vector<std::string> parameter_names;
  int max_strategy = 0;
  bool any_eta = false, any_nmb = false;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string& n = names[i];
    int k;
    if (n == "sim") {
      columns[i] = {Role::sim};
    } else if ((k = match_strategy_column(n, "qaly")) > 0) {
      columns[i] = {Role::effect, k};
      max_strategy = std::max(max_strategy, k);
    } else if ((k = match_strategy_column(n, "cost")) > 0) {
      columns[i] = {Role::cost, k};
      max_strategy = std::max(max_strategy, k);
    } else if ((k = match_strategy_column(n, "nmb")) > 0) {
      columns[i] = {Role::nmb, k};
      any_nmb = true;
      max_strategy = std::max(max_strategy, k);
    } else if ((k = match_strategy_column(n, "enb")) > 0 || (k = match_strategy_column(n, "evppi")) > 0) {
      columns[i] = {Role::eta, k};
      any_eta = true;
      max_strategy = std::max(max_strategy, k);
    } else {
      columns[i] = {Role::parameter};
      parameter_names.push_back(n);
    }
  }
  if (max_strategy < 2) throw schema_error("expected qaly.t<k>/cost.t<k> columns for at least 2 strategies");

  // Every strategy 1..T needs exactly one qaly and one cost column; enb needs nmb.
  std::vector<int> qaly_count(max_strategy + 1, 0), cost_count(max_strategy + 1, 0);
  std::vector<int> nmb_count(max_strategy + 1, 0), eta_count(max_strategy + 1, 0);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].role == Role::effect) ++qaly_count[columns[i].strategy];
    if (columns[i].role == Role::cost) ++cost_count[columns[i].strategy];
    if (columns[i].role == Role::nmb) ++nmb_count[columns[i].strategy];
    if (columns[i].role == Role::eta) ++eta_count[columns[i].strategy];
  }
  for (int t = 1; t <= max_strategy; ++t) {
    if (qaly_count[t] != 1 || cost_count[t] != 1)
      throw schema_error("strategy t" + std::to_string(t) + " must have exactly one qaly and one cost column");
    if (any_nmb && nmb_count[t] != 1)
      throw schema_error("augmented dataset must carry nmb.t<k> for every strategy");
    if (any_eta && eta_count[t] != 1)
      throw schema_error("augmented dataset must carry enb.t<k> (or evppi.t<k>) for every strategy");
  }
  if (any_eta && !any_nmb) throw schema_error("enb/evppi columns require matching nmb columns");

  std::vector<std::vector<double>> cells(names.size());
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> raw = split_csv_line(line);
    if (raw.size() != names.size())
      throw format_error("row " + std::to_string(row) + " has " + std::to_string(raw.size()) +
                         " cells, expected " + std::to_string(names.size()));
    for (std::size_t i = 0; i < raw.size(); ++i) cells[i].push_back(parse_cell(raw[i], row, names[i]));
  }
  if (row < 2) throw validation_error("S >= 2 required");

  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].role == Role::sim) {
      for (std::size_t s = 0; s < row; ++s) {
        if (cells[i][s] != static_cast<double>(s + 1))
          throw validation_error("sim column must run 1..S; row " + std::to_string(s + 1) +
                                 " holds " + format_double(cells[i][s]));
      }
    }
  }

  std::vector<std::vector<double>> params;
  std::vector<std::vector<double>> effects(max_strategy), costs(max_strategy);
  Matrix nmb(any_nmb ? row : 0, any_nmb ? max_strategy : 0);
  Matrix eta(any_eta ? row : 0, any_eta ? max_strategy : 0);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    switch (columns[i].role) {
      case Role::parameter: params.push_back(std::move(cells[i])); break;
      case Role::effect: effects[columns[i].strategy - 1] = std::move(cells[i]); break;
      case Role::cost: costs[columns[i].strategy - 1] = std::move(cells[i]); break;
      case Role::nmb:
        for (std::size_t s = 0; s < row; ++s) nmb.at(s, columns[i].strategy - 1) = cells[i][s];
        break;
      case Role::eta:
        for (std::size_t s = 0; s < row; ++s) eta.at(s, columns[i].strategy - 1) = cells[i][s];
        break;
      case Role::sim: break;
    }
  }

  std::vector<Strategy> strategies;
  for (int t = 1; t <= max_strategy; ++t) strategies.push_back(Strategy{t, "t" + std::to_string(t)});

  LoadedDataset loaded;
  loaded.psa = PsaDataset(std::move(parameter_names), std::move(strategies), std::move(params),
                          std::move(effects), std::move(costs));
  if (any_nmb) loaded.nmb = std::move(nmb);
  if (any_eta) loaded.eta = std::move(eta);
  return loaded;
}

LoadedDataset load_psa_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open '" + path + "'");
  return load_psa_dataset(in);
}

AugmentedPsaDataset LoadedDataset::to_augmented(std::vector<std::string> phi_names) const {
  if (!augmented()) throw schema_error("dataset has no nmb/enb columns");
  AugmentedPsaDataset aug;
  aug.base = psa;
  aug.nmb = *nmb;
  aug.eta = *eta;
  aug.phi_names = std::move(phi_names);
  return aug;
}

namespace {

void write_base(std::ostream& out, const PsaDataset& ds, const Matrix* nmb, const Matrix* eta) {
  out << "sim";
  for (const auto& n : ds.parameter_names()) out << ',' << n;
  for (std::size_t t = 0; t < ds.n_strategies(); ++t)
    out << ",qaly.t" << t + 1 << ",cost.t" << t + 1;
  if (nmb) {
    for (std::size_t t = 0; t < ds.n_strategies(); ++t) out << ",nmb.t" << t + 1;
    for (std::size_t t = 0; t < ds.n_strategies(); ++t) out << ",enb.t" << t + 1;
  }
  out << '\n';
  for (std::size_t s = 0; s < ds.rows(); ++s) {
    out << s + 1;
    for (std::size_t p = 0; p < ds.n_parameters(); ++p) out << ',' << format_double(ds.parameter(p)[s]);
    for (std::size_t t = 0; t < ds.n_strategies(); ++t)
      out << ',' << format_double(ds.effect(t)[s]) << ',' << format_double(ds.cost(t)[s]);
    if (nmb) {
      for (std::size_t t = 0; t < ds.n_strategies(); ++t) out << ',' << format_double(nmb->at(s, t));
      for (std::size_t t = 0; t < ds.n_strategies(); ++t) out << ',' << format_double(eta->at(s, t));
    }
    out << '\n';
  }
}

}  // namespace

void save_psa_dataset(std::ostream& out, const PsaDataset& ds) { write_base(out, ds, nullptr, nullptr); }

void save_psa_dataset(std::ostream& out, const AugmentedPsaDataset& ds) {
  write_base(out, ds.base, &ds.nmb, &ds.eta);
}

void save_psa_dataset_file(const std::string& path, const PsaDataset& ds) {
  std::ofstream out(path);
  if (!out) throw format_error("cannot write '" + path + "'");
  save_psa_dataset(out, ds);
}

void save_psa_dataset_file(const std::string& path, const AugmentedPsaDataset& ds) {
  std::ofstream out(path);
  if (!out) throw format_error("cannot write '" + path + "'");
  save_psa_dataset(out, ds);
}

void save_curves_csv(std::ostream& out, const DecisionUncertaintyCurves& curves) {
  out << "lambda,strategy,ceac,elc,ceaf\n";
  for (std::size_t l = 0; l < curves.thresholds.size(); ++l) {
    for (std::size_t t = 0; t < curves.ceac.cols(); ++t) {
      out << format_double(curves.thresholds[l]) << ',' << t + 1 << ','
          << format_double(curves.ceac.at(l, t)) << ',' << format_double(curves.elc.at(l, t)) << ','
          << (curves.ceaf[l] == t ? 1 : 0) << '\n';
    }
  }
}

}  // namespace voi

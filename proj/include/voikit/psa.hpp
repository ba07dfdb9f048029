#ifndef VOIKIT_PSA_HPP
#define VOIKIT_PSA_HPP

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "voikit/common.hpp"

namespace voi {

struct Strategy {
  int index = 0;  // 1-based
  std::string label;
};

struct WtpThreshold {
  double lambda = 0.0;  // currency per QALY, > 0
};

// Joint draws of model parameters and per-strategy (effect, cost) outcomes.
// Column-major storage: parameters[p][s], effects[t][s], costs[t][s].
class PsaDataset {
 public:
  PsaDataset() = default;
  PsaDataset(std::vector<std::string> parameter_names,
             std::vector<Strategy> strategies,
             std::vector<std::vector<double>> parameters,
             std::vector<std::vector<double>> effects,
             std::vector<std::vector<double>> costs);

  std::size_t rows() const { return rows_; }
  std::size_t n_parameters() const { return parameter_names_.size(); }
  std::size_t n_strategies() const { return strategies_.size(); }

  const std::vector<std::string>& parameter_names() const { return parameter_names_; }
  const std::vector<Strategy>& strategies() const { return strategies_; }

  const std::vector<double>& parameter(std::size_t p) const { return parameters_[p]; }
  const std::vector<double>& parameter(const std::string& name) const;
  std::size_t parameter_index(const std::string& name) const;
  bool has_parameter(const std::string& name) const;

  const std::vector<double>& effect(std::size_t t) const { return effects_[t]; }
  const std::vector<double>& cost(std::size_t t) const { return costs_[t]; }

  // Effect/cost column headers in canonical order (qaly.t1, cost.t1, ...).
  std::vector<std::string> outcome_names() const;

 private:
  void validate() const;

  std::vector<std::string> parameter_names_;
  std::vector<Strategy> strategies_;
  std::vector<std::vector<double>> parameters_;
  std::vector<std::vector<double>> effects_;
  std::vector<std::vector<double>> costs_;
  std::size_t rows_ = 0;
};

struct NetBenefitMatrix {
  Matrix values;  // S x T, currency
  WtpThreshold threshold;
};

struct IncrementalNetBenefitMatrix {
  Matrix values;      // S x T; reference column identically zero
  std::size_t reference = 0;  // 0-based strategy index t*
};

// PSA dataset augmented with per-strategy net benefit and conditional expected
// net benefit columns (eta), as produced by EVPPI estimation.
struct AugmentedPsaDataset {
  PsaDataset base;
  Matrix nmb;  // S x T
  Matrix eta;  // S x T, E[NB_t | phi] per row; reference column is the NB mean
  std::vector<std::string> phi_names;

  std::size_t reference_strategy() const;  // argmax of nmb column means, ties -> lowest
};

struct DecisionUncertaintyCurves {
  std::vector<double> thresholds;
  Matrix ceac;             // L x T, probability strategy t is optimal
  std::vector<std::size_t> ceaf;  // per lambda, 0-based optimal-on-average strategy
  Matrix elc;              // L x T, expected loss
};

// --- operations ---

NetBenefitMatrix compute_net_benefit(const PsaDataset& ds, WtpThreshold lambda);

// argmax over t of the column means of nb, ties to the lowest index.
std::size_t choose_reference_strategy(const Matrix& nb);

IncrementalNetBenefitMatrix compute_incremental_net_benefit(const NetBenefitMatrix& nb,
                                                            std::optional<std::size_t> reference = std::nullopt);

VoiEstimate evpi(const NetBenefitMatrix& nb);

DecisionUncertaintyCurves decision_uncertainty_curves(const PsaDataset& ds,
                                                      const std::vector<double>& lambdas);

// --- persistence (CSV, Tables S1/S2 layout) ---

struct LoadedDataset {
  PsaDataset psa;
  std::optional<Matrix> nmb;
  std::optional<Matrix> eta;

  bool augmented() const { return nmb.has_value() && eta.has_value(); }
  AugmentedPsaDataset to_augmented(std::vector<std::string> phi_names = {}) const;
};

LoadedDataset load_psa_dataset(std::istream& in);
LoadedDataset load_psa_dataset_file(const std::string& path);

void save_psa_dataset(std::ostream& out, const PsaDataset& ds);
void save_psa_dataset(std::ostream& out, const AugmentedPsaDataset& ds);
void save_psa_dataset_file(const std::string& path, const PsaDataset& ds);
void save_psa_dataset_file(const std::string& path, const AugmentedPsaDataset& ds);

// Long-format CSV: lambda,strategy,ceac,elc,ceaf
void save_curves_csv(std::ostream& out, const DecisionUncertaintyCurves& curves);

// Full round-trip rendering of one double (at least 10 significant digits; we
// emit 17 so load(save(x)) == x bit-exactly).
std::string format_double(double value);

}  // namespace voi

#endif  // VOIKIT_PSA_HPP

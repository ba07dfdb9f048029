#ifndef VOIKIT_EVPPI_HPP
#define VOIKIT_EVPPI_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "voikit/metamodel.hpp"
#include "voikit/psa.hpp"

namespace voi {

struct EvppiOptions {
  MetamodelConfig metamodel;
  // Nonparametric bootstrap over PSA rows, re-solving predictions with the
  // smoothing weights frozen. 0 skips the standard error.
  int bootstrap_replicates = 200;
  // Fixed so EVPPI stays deterministic without a caller-provided seed.
  std::uint64_t bootstrap_seed = 0x5EEDBEEF;
  int threads = 0;
};

struct EvppiResult {
  VoiEstimate estimate;
  AugmentedPsaDataset augmented;
  std::vector<MetamodelReport> reports;  // one per non-reference strategy
};

// Regression-based EVPPI for the parameter subset phi: fits INB_t on phi for
// every non-reference strategy, evaluates the expected-max-gain estimator on
// the fitted values, and returns the eta-augmented dataset consumed by the
// importance-sampling and moment-matching EVSI methods.
EvppiResult estimate_evppi(const PsaDataset& ds, const std::vector<std::string>& phi_names,
                           WtpThreshold lambda, const EvppiOptions& options = {});

}  // namespace voi

#endif  // VOIKIT_EVPPI_HPP

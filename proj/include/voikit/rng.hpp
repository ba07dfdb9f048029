#ifndef VOIKIT_RNG_HPP
#define VOIKIT_RNG_HPP

#include <cstdint>

namespace voi {

// Stream purposes keep independent uses of the same (seed, index) pair from
// colliding. Values are part of the reproducibility contract; do not renumber.
enum class RngPurpose : std::uint64_t {
  psa_draw = 1,
  future_data = 2,
  posterior_draw = 3,
  metropolis = 4,
  bootstrap = 5,
  quantile_psa = 6,
  pilot_data = 7,
  oracle_outer = 8,
  oracle_inner = 9,
};

// Counter-based stream: output i is a strong 64-bit mix of (key, i), where the
// key folds in (seed, stream, purpose). Streams are cheap to construct per PSA
// row, so parallel and serial schedules produce identical draws.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream, RngPurpose purpose);

  std::uint64_t next_u64();

  double uniform();  // open interval (0, 1)
  double normal();   // standard normal, Box-Muller with one cached value
  double normal(double mean, double variance);
  double gamma(double shape, double rate);
  double beta(double a, double b);
  double exponential(double rate);
  double lognormal(double mu, double sigma2);
  double inverse_gamma(double shape, double scale);
  long binomial(long n, double p);
  long poisson(double mean);

 private:
  double gamma_shape_ge1(double shape);

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace voi

#endif  // VOIKIT_RNG_HPP

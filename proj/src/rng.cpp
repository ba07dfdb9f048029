#include "voikit/rng.hpp"

#include <cmath>

#include "voikit/common.hpp"

namespace voi {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream, RngPurpose purpose) {
  std::uint64_t k = mix64(seed + kGolden);
  k = mix64(k ^ (stream + kGolden));
  k = mix64(k ^ (static_cast<std::uint64_t>(purpose) + kGolden));
  key_ = k;
}

std::uint64_t RngStream::next_u64() { return mix64(key_ + (++counter_) * kGolden); }

double RngStream::uniform() {
  // 53 random bits centered in (0, 1); never returns an endpoint.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

double RngStream::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 6.283185307179586476925286766559 * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

double RngStream::normal(double mean, double variance) {
  return mean + std::sqrt(variance) * normal();
}

double RngStream::gamma_shape_ge1(double shape) {
  // Marsaglia-Tsang squeeze method, shape >= 1, unit rate.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double RngStream::gamma(double shape, double rate) {
  if (shape <= 0.0 || rate <= 0.0) throw domain_error("gamma sampler requires shape > 0 and rate > 0");
  if (shape >= 1.0) return gamma_shape_ge1(shape) / rate;
  // Boost a < 1 through G(a) = G(a + 1) * U^(1/a).
  const double g = gamma_shape_ge1(shape + 1.0);
  return g * std::pow(uniform(), 1.0 / shape) / rate;
}

double RngStream::beta(double a, double b) {
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  return x / (x + y);
}

double RngStream::exponential(double rate) {
  if (rate <= 0.0) throw domain_error("exponential sampler requires rate > 0");
  return -std::log(uniform()) / rate;
}

double RngStream::lognormal(double mu, double sigma2) {
  return std::exp(mu + std::sqrt(sigma2) * normal());
}

double RngStream::inverse_gamma(double shape, double scale) {
  return 1.0 / gamma(shape, scale);
}

long RngStream::binomial(long n, double p) {
  if (n < 0) throw domain_error("binomial sampler requires n >= 0");
  if (p < 0.0 || p > 1.0) throw domain_error("binomial sampler requires p in [0, 1]");
  if (n == 0 || p == 0.0) return 0;
  if (p == 1.0) return n;
  // Exact recursive split via beta order statistics keeps large n at O(log n)
  // gamma draws instead of n Bernoullis.
  long offset = 0;
  while (n > 64) {
    const long k = (n + 1) / 2;
    const double v = beta(static_cast<double>(k), static_cast<double>(n + 1 - k));
    if (p >= v) {
      offset += k;
      n -= k;
      p = (p - v) / (1.0 - v);
      if (p < 0.0) p = 0.0;
    } else {
      n = k - 1;
      p = p / v;
      if (p > 1.0) p = 1.0;
    }
  }
  long successes = 0;
  for (long i = 0; i < n; ++i) successes += uniform() < p ? 1 : 0;
  return offset + successes;
}

long RngStream::poisson(double mean) {
  if (mean < 0.0 || !std::isfinite(mean)) throw domain_error("poisson sampler requires finite mean >= 0");
  long total = 0;
  // Exact gamma split keeps large means at O(log mean) work.
  while (mean > 30.0) {
    const long m = static_cast<long>(0.875 * mean);
    const double g = gamma(static_cast<double>(m), 1.0);
    if (g <= mean) {
      total += m;
      mean -= g;
    } else {
      return total + binomial(m - 1, mean / g);
    }
  }
  // Knuth product-of-uniforms for the small remainder.
  const double limit = std::exp(-mean);
  double prod = uniform();
  while (prod > limit) {
    ++total;
    prod *= uniform();
  }
  return total;
}

}  // namespace voi

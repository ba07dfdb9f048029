#ifndef VOIKIT_COMMON_HPP
#define VOIKIT_COMMON_HPP

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace voi {

// Error taxonomy mirrors the CLI exit codes: usage -> 2, data -> 3, numeric -> 4.
enum class ErrorKind { usage, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const { return kind_; }
  const std::string& code() const { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

inline Error usage_error(const std::string& msg) { return Error(ErrorKind::usage, "usage", msg); }
inline Error format_error(const std::string& msg) { return Error(ErrorKind::data, "format", msg); }
inline Error parse_error(const std::string& msg) { return Error(ErrorKind::data, "parse", msg); }
inline Error schema_error(const std::string& msg) { return Error(ErrorKind::data, "schema", msg); }
inline Error argument_error(const std::string& msg) { return Error(ErrorKind::data, "argument", msg); }
inline Error domain_error(const std::string& msg) { return Error(ErrorKind::data, "domain", msg); }
inline Error validation_error(const std::string& msg) { return Error(ErrorKind::data, "validation", msg); }
inline Error numeric_error(const std::string& msg) { return Error(ErrorKind::numeric, "numeric", msg); }
inline Error dimension_error(const std::string& msg) { return Error(ErrorKind::numeric, "dimension", msg); }
inline Error model_error(const std::string& msg) { return Error(ErrorKind::numeric, "model", msg); }
inline Error degeneracy_error(const std::string& msg) { return Error(ErrorKind::numeric, "degeneracy", msg); }
inline Error estimation_error(const std::string& msg) { return Error(ErrorKind::numeric, "estimation", msg); }

// Dense row-major matrix, just enough for S x T net-benefit style tables.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  double column_mean(std::size_t c) const {
    double acc = 0.0;
    for (std::size_t r = 0; r < rows_; ++r) acc += at(r, c);
    return acc / static_cast<double>(rows_);
  }

  // Sample variance (n - 1 denominator) of one column.
  double column_variance(std::size_t c) const {
    const double m = column_mean(c);
    double acc = 0.0;
    for (std::size_t r = 0; r < rows_; ++r) {
      const double d = at(r, c) - m;
      acc += d * d;
    }
    return acc / static_cast<double>(rows_ - 1);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct Diagnostics {
  std::map<std::string, double> values;
  std::vector<std::string> warnings;

  void warn(const std::string& msg) { warnings.push_back(msg); }
};

enum class VoiKind { evpi, evppi, evsi };

std::string to_string(VoiKind kind);

// One value-of-information result, per-person currency units.
struct VoiEstimate {
  VoiKind kind = VoiKind::evpi;
  double value = 0.0;
  std::optional<double> mc_se;
  std::string method;
  std::optional<long> design_n;
  Diagnostics diagnostics;
};

// Nonnegative VOI values can dip below zero only through float error; clamp and
// keep the raw value in the diagnostics.
double clamp_voi(double value, Diagnostics& diag);

// mean_s max_t values(s,t) - max_t mean_s values(s,t), the shared estimator
// behind EVPI, EVPPI and Eq.-(4)-style EVSI. Sequential row-order accumulation,
// reproducible bit-for-bit against a naive double loop. If mc_se is non-null it
// receives the standard error of the first (row-max) term.
double max_gain_estimate(const Matrix& values, double* mc_se);

// Runs fn(begin, end) over contiguous chunks of [0, n). threads <= 1 runs inline.
// Work must write to disjoint per-index slots; callers reduce sequentially afterwards.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn);

// Global default used when an operation is not given an explicit thread count.
int default_thread_count();
void set_default_thread_count(int threads);

}  // namespace voi

#endif  // VOIKIT_COMMON_HPP

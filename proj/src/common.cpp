#include "voikit/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace voi {

std::string to_string(VoiKind kind) {
  switch (kind) {
    case VoiKind::evpi: return "EVPI";
    case VoiKind::evppi: return "EVPPI";
    case VoiKind::evsi: return "EVSI";
  }
  return "unknown";
}

double clamp_voi(double value, Diagnostics& diag) {
  if (value < 0.0) {
    diag.values["pre_clamp_value"] = value;
    return 0.0;
  }
  return value;
}

double max_gain_estimate(const Matrix& values, double* mc_se) {
  const std::size_t S = values.rows();
  const std::size_t T = values.cols();
  double sum_max = 0.0;
  double sum_sq_max = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    double m = values.at(s, 0);
    for (std::size_t t = 1; t < T; ++t) m = std::max(m, values.at(s, t));
    sum_max += m;
    sum_sq_max += m * m;
  }
  const double mean_max = sum_max / static_cast<double>(S);
  double best_mean = values.column_mean(0);
  for (std::size_t t = 1; t < T; ++t) best_mean = std::max(best_mean, values.column_mean(t));
  if (mc_se) {
    const double var =
        (sum_sq_max - static_cast<double>(S) * mean_max * mean_max) / static_cast<double>(S - 1);
    *mc_se = std::sqrt(std::max(0.0, var) / static_cast<double>(S));
  }
  return mean_max - best_mean;
}

namespace {
std::atomic<int> g_default_threads{0};
}  // namespace

int default_thread_count() {
  int t = g_default_threads.load();
  if (t > 0) return t;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_default_thread_count(int threads) { g_default_threads.store(threads); }

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (threads <= 0) threads = default_thread_count();
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end, &first_error, &error_mutex] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace voi

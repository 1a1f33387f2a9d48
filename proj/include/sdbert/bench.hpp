#ifndef SDBERT_BENCH_HPP_
#define SDBERT_BENCH_HPP_

#include <string>
#include <vector>

#include "sdbert/sparse_attention.hpp"

namespace sdbert {

// Scaling benchmark of the attention sublayer forward pass (all heads; no
// projections, so the measured work is the part whose complexity differs
// between the two paths). Masks and inputs are prepared outside the timed
// region; one warm-up run per length is excluded from the means.
struct BenchConfig {
  std::vector<int> lengths;  // >= 2 strictly increasing values
  int d_model = 64;
  int heads = 4;
  int reps = 5;  // >= 3 timed repetitions per length

  void validate() const;
};

// The fixed sparsity pattern the benchmark compares against full attention.
SparsityConfig bench_sparsity();

struct BenchModeResult {
  std::vector<double> mean_seconds;  // one entry per length
  double slope = 0.0;                // least-squares fit on (log n, log time)
};

struct BenchResult {
  BenchConfig config;
  BenchModeResult full;
  BenchModeResult sparse;
};

BenchResult run_bench(const BenchConfig& config);

// Least-squares slope of log(y) against log(x).
double log_log_slope(const std::vector<int>& x, const std::vector<double>& y);

std::string bench_to_json(const BenchResult& result);

}  // namespace sdbert

#endif  // SDBERT_BENCH_HPP_

#include "sdbert/bench.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include <json.hpp>

#include "sdbert/rng.hpp"

namespace sdbert {

void BenchConfig::validate() const {
  if (lengths.size() < 2) throw ConfigError("bench needs at least 2 lengths");
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] < 1) throw ConfigError("bench lengths must be positive");
    if (i > 0 && lengths[i] <= lengths[i - 1]) {
      throw ConfigError("bench lengths must be strictly increasing");
    }
  }
  if (d_model < 1 || heads < 1 || d_model % heads != 0) {
    throw ConfigError("bench d_model must be a positive multiple of heads");
  }
  if (reps < 3) throw ConfigError("bench needs at least 3 repetitions");
}

SparsityConfig bench_sparsity() {
  SparsityConfig s;
  s.global_tokens = 2;
  s.window_radius = 8;
  s.random_keys = 4;
  s.seed = 0;
  return s;
}

double log_log_slope(const std::vector<int>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DimensionError("slope fit needs matching series of length >= 2");
  }
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    lx[i] = std::log(static_cast<double>(x[i]));
    if (!(y[i] > 0.0)) throw NumericError("slope fit requires positive timings");
    ly[i] = std::log(y[i]);
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  return num / den;
}

namespace {

using Clock = std::chrono::steady_clock;

struct HeadInputs {
  std::vector<Tensor> q, k, v;  // one [n x head_dim] triple per head
};

HeadInputs make_inputs(int n, int heads, int head_dim, std::uint64_t seed) {
  HeadInputs in;
  std::mt19937_64 rng(seed);
  for (int h = 0; h < heads; ++h) {
    in.q.push_back(Tensor::random_uniform({n, head_dim}, 1.0, rng));
    in.k.push_back(Tensor::random_uniform({n, head_dim}, 1.0, rng));
    in.v.push_back(Tensor::random_uniform({n, head_dim}, 1.0, rng));
  }
  return in;
}

double time_dense(const HeadInputs& in, std::shared_ptr<const Tensor> additive) {
  const auto t0 = Clock::now();
  for (std::size_t h = 0; h < in.q.size(); ++h) {
    Tape tape;
    attend_dense(tape, tape.view(in.q[h]), tape.view(in.k[h]), tape.view(in.v[h]),
                 additive);
  }
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double time_sparse(const HeadInputs& in, std::shared_ptr<const AttentionMask> mask) {
  const auto t0 = Clock::now();
  for (std::size_t h = 0; h < in.q.size(); ++h) {
    Tape tape;
    attend_sparse(tape, tape.view(in.q[h]), tape.view(in.k[h]), tape.view(in.v[h]), mask);
  }
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

BenchResult run_bench(const BenchConfig& config) {
  config.validate();
  const int head_dim = config.d_model / config.heads;
  BenchResult result;
  result.config = config;

  for (int n : config.lengths) {
    const HeadInputs in =
        make_inputs(n, config.heads, head_dim, mix_seed(0xbe7c4ULL, n));
    const auto additive =
        std::make_shared<const Tensor>(additive_mask_tensor(full_mask(n)));
    SparsityConfig sp = bench_sparsity();
    if (sp.global_tokens > n) sp.global_tokens = n;
    const auto mask = std::make_shared<const AttentionMask>(build_mask(sp, n));

    time_dense(in, additive);  // warm-up, untimed
    time_sparse(in, mask);
    double full_total = 0.0, sparse_total = 0.0;
    for (int rep = 0; rep < config.reps; ++rep) {
      full_total += time_dense(in, additive);
      sparse_total += time_sparse(in, mask);
    }
    result.full.mean_seconds.push_back(full_total / config.reps);
    result.sparse.mean_seconds.push_back(sparse_total / config.reps);
  }
  result.full.slope = log_log_slope(config.lengths, result.full.mean_seconds);
  result.sparse.slope = log_log_slope(config.lengths, result.sparse.mean_seconds);
  return result;
}

std::string bench_to_json(const BenchResult& result) {
  const SparsityConfig sp = bench_sparsity();
  nlohmann::json j;
  j["lengths"] = result.config.lengths;
  j["d_model"] = result.config.d_model;
  j["heads"] = result.config.heads;
  j["reps"] = result.config.reps;
  j["sparsity"] = {{"g", sp.global_tokens}, {"w", sp.window_radius}, {"r", sp.random_keys}};
  j["full"] = {{"mean_seconds", result.full.mean_seconds}, {"slope", result.full.slope}};
  j["sparse"] = {{"mean_seconds", result.sparse.mean_seconds},
                 {"slope", result.sparse.slope}};
  return j.dump(2);
}

}  // namespace sdbert

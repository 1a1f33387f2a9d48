#include "sdbert/sparse_attention.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "sdbert/rng.hpp"

namespace sdbert {

void SparsityConfig::validate() const {
  if (global_tokens < 0 || window_radius < 0 || random_keys < 0) {
    throw ConfigError("sparsity counts must be non-negative");
  }
}

AttentionMask build_mask(const SparsityConfig& config, int n) {
  config.validate();
  if (n < 1) throw ConfigError("sequence length must be at least 1");
  if (config.global_tokens > n) {
    throw ConfigError("global token count " + std::to_string(config.global_tokens) +
                      " exceeds sequence length " + std::to_string(n));
  }
  const int g = config.global_tokens;
  const int w = config.window_radius;
  const int r = config.random_keys;

  AttentionMask mask;
  mask.n = n;
  mask.rows.resize(n);

  std::vector<int> all(n);
  for (int j = 0; j < n; ++j) all[j] = j;

  std::vector<char> member(n);
  std::vector<int> candidates;
  candidates.reserve(n);

  for (int i = 0; i < n; ++i) {
    if (i < g) {  // global row: sees everything
      mask.rows[i] = all;
      continue;
    }
    std::fill(member.begin(), member.end(), 0);
    member[i] = 1;
    for (int j = std::max(0, i - w); j <= std::min(n - 1, i + w); ++j) member[j] = 1;
    for (int j = 0; j < g; ++j) member[j] = 1;

    if (r > 0) {
      candidates.clear();
      for (int j = 0; j < n; ++j) {
        if (!member[j]) candidates.push_back(j);
      }
      const int k = std::min<int>(r, static_cast<int>(candidates.size()));
      std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(i)));
      for (int t = 0; t < k; ++t) {
        const std::size_t pick =
            t + static_cast<std::size_t>(uniform_below(rng, candidates.size() - t));
        std::swap(candidates[t], candidates[pick]);
        member[candidates[t]] = 1;
      }
    }

    auto& row = mask.rows[i];
    for (int j = 0; j < n; ++j) {
      if (member[j]) row.push_back(j);
    }
  }
  return mask;
}

AttentionMask full_mask(int n) {
  if (n < 1) throw ConfigError("sequence length must be at least 1");
  AttentionMask mask;
  mask.n = n;
  std::vector<int> all(n);
  for (int j = 0; j < n; ++j) all[j] = j;
  mask.rows.assign(n, all);
  return mask;
}

AttentionMask apply_key_padding(const AttentionMask& base,
                                const std::vector<std::uint8_t>& keep) {
  if (static_cast<int>(keep.size()) != base.n) {
    throw DimensionError("padding mask length does not match sequence length");
  }
  AttentionMask out;
  out.n = base.n;
  out.rows.resize(base.n);
  for (int i = 0; i < base.n; ++i) {
    auto& row = out.rows[i];
    for (int j : base.rows[i]) {
      if (keep[j] || j == i) row.push_back(j);
    }
  }
  return out;
}

MaskStats mask_stats(const AttentionMask& mask) {
  MaskStats stats;
  for (const auto& row : mask.rows) {
    stats.total_pairs += static_cast<std::int64_t>(row.size());
    stats.max_row_size = std::max(stats.max_row_size, static_cast<int>(row.size()));
  }
  const double n2 = static_cast<double>(mask.n) * static_cast<double>(mask.n);
  stats.density = static_cast<double>(stats.total_pairs) / n2;
  return stats;
}

Tensor additive_mask_tensor(const AttentionMask& mask) {
  Tensor t = Tensor::filled({mask.n, mask.n}, kMaskSentinel);
  for (int i = 0; i < mask.n; ++i) {
    for (int j : mask.rows[i]) t.at(i, j) = 0.0;
  }
  return t;
}

void write_mask(std::ostream& os, const AttentionMask& mask) {
  for (int i = 0; i < mask.n; ++i) {
    const auto& row = mask.rows[i];
    for (std::size_t t = 0; t < row.size(); ++t) {
      if (t) os << ' ';
      os << row[t];
    }
    os << '\n';
  }
}

namespace {

void check_qkv(const Tensor& q, const Tensor& k, const Tensor& v, int mask_n) {
  if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2 || !q.same_shape(k) ||
      !q.same_shape(v)) {
    throw DimensionError("attention requires Q, K, V of identical [n x d] shape");
  }
  if (q.rows() != mask_n) {
    throw DimensionError("attention mask is for n=" + std::to_string(mask_n) +
                         " but inputs have n=" + std::to_string(q.rows()));
  }
}

struct SparseForward {
  Tensor out;
  // Softmax probabilities for every (row, permitted key) pair, laid out
  // row-after-row; offsets[i] is the start of row i.
  std::vector<double> probs;
  std::vector<std::size_t> offsets;
};

SparseForward sparse_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                             const AttentionMask& mask) {
  const int n = q.rows(), d = q.cols();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  SparseForward f;
  f.out = Tensor::zeros({n, d});
  f.offsets.resize(n + 1, 0);
  for (int i = 0; i < n; ++i) f.offsets[i + 1] = f.offsets[i] + mask.rows[i].size();
  f.probs.resize(f.offsets[n]);

  std::vector<double> scores;
  for (int i = 0; i < n; ++i) {
    const auto& idx = mask.rows[i];
    if (idx.empty()) {
      throw NumericError("attend_sparse: row " + std::to_string(i) + " permits no keys");
    }
    const double* qi = q.values.data() + static_cast<std::size_t>(i) * d;
    scores.assign(idx.size(), 0.0);
    for (std::size_t t = 0; t < idx.size(); ++t) {
      const double* kj = k.values.data() + static_cast<std::size_t>(idx[t]) * d;
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += qi[c] * kj[c];
      scores[t] = s * inv_sqrt_d;
    }
    double* p = f.probs.data() + f.offsets[i];
    kernels::softmax_row(scores.data(), nullptr, p, static_cast<int>(idx.size()));
    double* oi = f.out.values.data() + static_cast<std::size_t>(i) * d;
    for (std::size_t t = 0; t < idx.size(); ++t) {
      const double* vj = v.values.data() + static_cast<std::size_t>(idx[t]) * d;
      const double pt = p[t];
      for (int c = 0; c < d; ++c) oi[c] += pt * vj[c];
    }
  }
  return f;
}

}  // namespace

Tape::Ref attend_dense(Tape& tape, Tape::Ref q, Tape::Ref k, Tape::Ref v,
                       std::shared_ptr<const Tensor> additive_mask) {
  check_qkv(tape.value(q), tape.value(k), tape.value(v),
            additive_mask ? additive_mask->rows() : tape.value(q).rows());
  const int d = tape.value(q).cols();
  Tape::Ref scores = tape.matmul_nt(q, k);
  Tape::Ref scaled = tape.scale(scores, 1.0 / std::sqrt(static_cast<double>(d)));
  Tape::Ref probs = tape.softmax_rows(scaled, std::move(additive_mask));
  return tape.matmul(probs, v);
}

Tape::Ref attend_dense(Tape& tape, Tape::Ref q, Tape::Ref k, Tape::Ref v,
                       const AttentionMask& mask) {
  check_qkv(tape.value(q), tape.value(k), tape.value(v), mask.n);
  return attend_dense(tape, q, k, v,
                      std::make_shared<const Tensor>(additive_mask_tensor(mask)));
}

Tape::Ref attend_sparse(Tape& tape, Tape::Ref q, Tape::Ref k, Tape::Ref v,
                        const AttentionMask& mask) {
  return attend_sparse(tape, q, k, v, std::make_shared<const AttentionMask>(mask));
}

Tape::Ref attend_sparse(Tape& tape, Tape::Ref q, Tape::Ref k, Tape::Ref v,
                        std::shared_ptr<const AttentionMask> mask) {
  const Tensor& tq = tape.value(q);
  check_qkv(tq, tape.value(k), tape.value(v), mask->n);
  const int n = tq.rows(), d = tq.cols();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  SparseForward f = sparse_forward(tq, tape.value(k), tape.value(v), *mask);
  auto probs = std::make_shared<std::vector<double>>(std::move(f.probs));
  auto offsets = std::make_shared<std::vector<std::size_t>>(std::move(f.offsets));
  auto rows = std::shared_ptr<const std::vector<std::vector<int>>>(mask, &mask->rows);

  return tape.custom(
      std::move(f.out), {q, k, v},
      [q, k, v, n, d, inv_sqrt_d, probs, offsets, rows](Tape& t, Tape::Ref self) {
        const auto& g = t.grad_at(self);
        const auto& qv = t.value(q).values;
        const auto& kv = t.value(k).values;
        const auto& vv = t.value(v).values;
        const bool want_q = t.wants_grad(q);
        const bool want_k = t.wants_grad(k);
        const bool want_v = t.wants_grad(v);
        double* gq = want_q ? t.grad_buffer(q).data() : nullptr;
        double* gk = want_k ? t.grad_buffer(k).data() : nullptr;
        double* gv = want_v ? t.grad_buffer(v).data() : nullptr;

        std::vector<double> dp;
        for (int i = 0; i < n; ++i) {
          const auto& idx = (*rows)[i];
          const double* p = probs->data() + (*offsets)[i];
          const double* gi = g.data() + static_cast<std::size_t>(i) * d;
          dp.assign(idx.size(), 0.0);
          for (std::size_t tt = 0; tt < idx.size(); ++tt) {
            const double* vj = vv.data() + static_cast<std::size_t>(idx[tt]) * d;
            double s = 0.0;
            for (int c = 0; c < d; ++c) s += gi[c] * vj[c];
            dp[tt] = s;
            if (want_v) {
              double* dvj = gv + static_cast<std::size_t>(idx[tt]) * d;
              for (int c = 0; c < d; ++c) dvj[c] += p[tt] * gi[c];
            }
          }
          if (!want_q && !want_k) continue;
          double dot = 0.0;
          for (std::size_t tt = 0; tt < idx.size(); ++tt) dot += p[tt] * dp[tt];
          const double* qi = qv.data() + static_cast<std::size_t>(i) * d;
          for (std::size_t tt = 0; tt < idx.size(); ++tt) {
            const double ds = p[tt] * (dp[tt] - dot) * inv_sqrt_d;
            const double* kj = kv.data() + static_cast<std::size_t>(idx[tt]) * d;
            if (want_q) {
              double* dqi = gq + static_cast<std::size_t>(i) * d;
              for (int c = 0; c < d; ++c) dqi[c] += ds * kj[c];
            }
            if (want_k) {
              double* dkj = gk + static_cast<std::size_t>(idx[tt]) * d;
              for (int c = 0; c < d; ++c) dkj[c] += ds * qi[c];
            }
          }
        }
      });
}

Tensor attend_dense(const Tensor& q, const Tensor& k, const Tensor& v,
                    const AttentionMask& mask) {
  Tape tape;
  Tape::Ref out = attend_dense(tape, tape.constant(q), tape.constant(k),
                               tape.constant(v), mask);
  return tape.value(out);
}

Tensor attend_sparse(const Tensor& q, const Tensor& k, const Tensor& v,
                     const AttentionMask& mask) {
  check_qkv(q, k, v, mask.n);
  return sparse_forward(q, k, v, mask).out;
}

}  // namespace sdbert

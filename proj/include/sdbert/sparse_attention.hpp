#ifndef SDBERT_SPARSE_ATTENTION_HPP_
#define SDBERT_SPARSE_ATTENTION_HPP_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "sdbert/tape.hpp"
#include "sdbert/tensor.hpp"

namespace sdbert {

// Sparsity pattern parameters: the first g positions are global tokens,
// every token sees a window of radius w on each side, and each query row
// draws r extra random key positions (seeded, without replacement).
struct SparsityConfig {
  int global_tokens = 0;   // g
  int window_radius = 0;   // w
  int random_keys = 0;     // r
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-query-row sets of permitted key indices, rows sorted ascending.
// Built once, immutable afterwards.
struct AttentionMask {
  int n = 0;
  std::vector<std::vector<int>> rows;

  const std::vector<int>& allowed(int i) const { return rows[i]; }
};

struct MaskStats {
  std::int64_t total_pairs = 0;
  int max_row_size = 0;
  double density = 0.0;  // total_pairs / n^2
};

// Union of self, window, global columns, and r random keys per row; rows
// i < g are fully connected. Deterministic under (config, n).
AttentionMask build_mask(const SparsityConfig& config, int n);

// Every row permits every key: the quadratic baseline.
AttentionMask full_mask(int n);

// Drops masked-out keys (keep[j] == false) from every row, always retaining
// the self index so no row goes empty. Used to fold a padding mask into a
// base pattern; the result is an effective mask, not a build_mask output.
AttentionMask apply_key_padding(const AttentionMask& base,
                                const std::vector<std::uint8_t>& keep);

MaskStats mask_stats(const AttentionMask& mask);

// [0, n) x [0, n) additive score mask: 0 where permitted, kMaskSentinel
// elsewhere.
Tensor additive_mask_tensor(const AttentionMask& mask);

// One line per query row: the sorted permitted key indices, space-separated.
void write_mask(std::ostream& os, const AttentionMask& mask);

// ---------------------------------------------------------------------------
// Attention evaluation. Both paths take Q, K, V of shape [n x d] and return
// [n x d]; scores are scaled by 1/sqrt(d). attend_dense is the reference:
// a full score matrix with sentinel-masked softmax, composed from generic
// tape operations. attend_sparse touches only the permitted keys of each
// row (work per row proportional to |allowed(i)| * d) and carries its own
// fused gradient rule. The two agree elementwise to 1e-10.
// ---------------------------------------------------------------------------

Tape::Ref attend_dense(Tape& tape, Tape::Ref q, Tape::Ref k, Tape::Ref v,
                       const AttentionMask& mask);

// Variant sharing a prebuilt additive mask tensor (e.g. across heads).
Tape::Ref attend_dense(Tape& tape, Tape::Ref q, Tape::Ref k, Tape::Ref v,
                       std::shared_ptr<const Tensor> additive_mask);

Tape::Ref attend_sparse(Tape& tape, Tape::Ref q, Tape::Ref k, Tape::Ref v,
                        const AttentionMask& mask);

// Variant sharing one mask across many calls (heads/layers) without copies.
Tape::Ref attend_sparse(Tape& tape, Tape::Ref q, Tape::Ref k, Tape::Ref v,
                        std::shared_ptr<const AttentionMask> mask);

// Convenience non-recording forms for benchmarks and tests.
Tensor attend_dense(const Tensor& q, const Tensor& k, const Tensor& v,
                    const AttentionMask& mask);
Tensor attend_sparse(const Tensor& q, const Tensor& k, const Tensor& v,
                     const AttentionMask& mask);

}  // namespace sdbert

#endif  // SDBERT_SPARSE_ATTENTION_HPP_

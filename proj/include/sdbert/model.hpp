#ifndef SDBERT_MODEL_HPP_
#define SDBERT_MODEL_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdbert/sparse_attention.hpp"
#include "sdbert/tape.hpp"
#include "sdbert/tensor.hpp"

namespace sdbert {

enum class AttentionMode { kFull, kSparse };

struct ModelConfig {
  int num_layers = 1;
  int num_heads = 1;
  int d_model = 16;
  int d_ff = 32;
  int vocab_size = 16;
  int max_len = 16;
  int num_classes = 2;
  AttentionMode attention_mode = AttentionMode::kFull;
  SparsityConfig sparsity;  // used when attention_mode == kSparse

  int head_dim() const { return d_model / num_heads; }
  void validate() const;
};

// One pre-norm encoder layer: norm -> multi-head attention -> residual,
// norm -> feed-forward -> residual.
struct LayerParams {
  Tensor attn_norm_gain, attn_norm_shift;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ff_norm_gain, ff_norm_shift;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
};

struct Parameters {
  Tensor token_embedding;     // [V x d]
  Tensor position_embedding;  // [max_len x d]
  std::vector<LayerParams> layers;
  Tensor classifier_w;  // [d x C]
  Tensor classifier_b;  // [C]
};

// Stable (name, tensor) enumeration; the order fixes checkpoint layout and
// optimizer state indexing.
std::vector<std::pair<std::string, Tensor*>> named_tensors(Parameters& p);
std::vector<std::pair<std::string, const Tensor*>> named_tensors(const Parameters& p);

// Weights uniform in [-1/sqrt(d_model), 1/sqrt(d_model)); biases and norm
// shifts zero; norm gains one. All tensors marked requires_grad.
// Deterministic per seed.
Parameters init_params(const ModelConfig& config, std::uint64_t seed);

// Closed-form parameter count implied by the layout above:
//   V*d + max_len*d + L*(4d^2 + 4d + 4d + d*f + f + f*d + d) + d*C + C.
std::int64_t count_parameters(const ModelConfig& config);

// FNV-1a over the raw bytes of every parameter value, in enumeration order.
std::uint64_t parameters_fingerprint(const Parameters& p);

// Full classifier forward: embeddings + positions, num_layers pre-norm
// blocks whose attention honors the configured sparsity pattern and the
// padding mask (padded keys are hidden from every query; padded queries
// keep only themselves so softmax stays defined), then the classifier
// applied to position 0 of each sequence.
//
// token_ids/real are row-major [batch x seq_len]; real[t] == 0 marks padding.
// Returns the [batch x num_classes] logits node.
Tape::Ref encoder_forward(Tape& tape, Parameters& params, const ModelConfig& config,
                          std::span<const int> token_ids,
                          std::span<const std::uint8_t> real, int batch, int seq_len);

// Inference-mode forward over frozen parameters; nothing is written to them.
Tensor forward(const Parameters& params, const ModelConfig& config,
               std::span<const int> token_ids, std::span<const std::uint8_t> real,
               int batch, int seq_len);

// The full-size teacher/student shapes this artifact scales down from
// (12L/12H vs 3L/4H at BERT-base widths); used for parameter accounting
// only, never trained here.
ModelConfig full_size_teacher_config();
ModelConfig full_size_student_config();

}  // namespace sdbert

#endif  // SDBERT_MODEL_HPP_

#include "sdbert/model.hpp"

#include <cmath>
#include <cstring>

#include "sdbert/rng.hpp"

namespace sdbert {

namespace {
constexpr double kNormEps = 1e-5;
}

void ModelConfig::validate() const {
  if (num_layers < 1 || num_heads < 1 || d_model < 1 || d_ff < 1 || vocab_size < 1) {
    throw ConfigError("model extents must be positive");
  }
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (d_model % num_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  if (attention_mode == AttentionMode::kSparse) sparsity.validate();
}

namespace {

template <typename ParamsT, typename Fn>
void enumerate_tensors(ParamsT& p, Fn&& fn) {
  fn("token_embedding", p.token_embedding);
  fn("position_embedding", p.position_embedding);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    const std::string prefix = "layer" + std::to_string(i) + ".";
    fn(prefix + "attn_norm_gain", l.attn_norm_gain);
    fn(prefix + "attn_norm_shift", l.attn_norm_shift);
    fn(prefix + "wq", l.wq);
    fn(prefix + "bq", l.bq);
    fn(prefix + "wk", l.wk);
    fn(prefix + "bk", l.bk);
    fn(prefix + "wv", l.wv);
    fn(prefix + "bv", l.bv);
    fn(prefix + "wo", l.wo);
    fn(prefix + "bo", l.bo);
    fn(prefix + "ff_norm_gain", l.ff_norm_gain);
    fn(prefix + "ff_norm_shift", l.ff_norm_shift);
    fn(prefix + "ff1_w", l.ff1_w);
    fn(prefix + "ff1_b", l.ff1_b);
    fn(prefix + "ff2_w", l.ff2_w);
    fn(prefix + "ff2_b", l.ff2_b);
  }
  fn("classifier_w", p.classifier_w);
  fn("classifier_b", p.classifier_b);
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> named_tensors(Parameters& p) {
  std::vector<std::pair<std::string, Tensor*>> out;
  enumerate_tensors(p, [&](const std::string& name, Tensor& t) {
    out.emplace_back(name, &t);
  });
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> named_tensors(const Parameters& p) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  enumerate_tensors(p, [&](const std::string& name, const Tensor& t) {
    out.emplace_back(name, &t);
  });
  return out;
}

Parameters init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.d_model));

  auto weight = [&](int r, int c) {
    Tensor t = Tensor::random_uniform({r, c}, scale, rng);
    t.requires_grad = true;
    return t;
  };
  auto zeros = [&](int n) {
    Tensor t = Tensor::zeros({n});
    t.requires_grad = true;
    return t;
  };
  auto ones = [&](int n) {
    Tensor t = Tensor::filled({n}, 1.0);
    t.requires_grad = true;
    return t;
  };

  const int d = config.d_model, f = config.d_ff;
  Parameters p;
  p.token_embedding = weight(config.vocab_size, d);
  p.position_embedding = weight(config.max_len, d);
  p.layers.resize(config.num_layers);
  for (auto& l : p.layers) {
    l.attn_norm_gain = ones(d);
    l.attn_norm_shift = zeros(d);
    l.wq = weight(d, d);
    l.bq = zeros(d);
    l.wk = weight(d, d);
    l.bk = zeros(d);
    l.wv = weight(d, d);
    l.bv = zeros(d);
    l.wo = weight(d, d);
    l.bo = zeros(d);
    l.ff_norm_gain = ones(d);
    l.ff_norm_shift = zeros(d);
    l.ff1_w = weight(d, f);
    l.ff1_b = zeros(f);
    l.ff2_w = weight(f, d);
    l.ff2_b = zeros(d);
  }
  p.classifier_w = weight(d, config.num_classes);
  p.classifier_b = zeros(config.num_classes);
  return p;
}

std::int64_t count_parameters(const ModelConfig& config) {
  config.validate();
  const std::int64_t d = config.d_model, f = config.d_ff, L = config.num_layers;
  const std::int64_t per_layer = 4 * d * d + 4 * d  // attention projections + biases
                                 + 4 * d            // two norm gain/shift pairs
                                 + d * f + f + f * d + d;  // feed-forward
  return config.vocab_size * d + config.max_len * d + L * per_layer +
         d * config.num_classes + config.num_classes;
}

std::uint64_t parameters_fingerprint(const Parameters& p) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& [name, tensor] : named_tensors(p)) {
    for (double v : tensor->values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffULL;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

namespace {

struct LayerRefs {
  Tape::Ref attn_norm_gain, attn_norm_shift;
  Tape::Ref wq, bq, wk, bk, wv, bv, wo, bo;
  Tape::Ref ff_norm_gain, ff_norm_shift;
  Tape::Ref ff1_w, ff1_b, ff2_w, ff2_b;
};

struct ParamRefs {
  Tape::Ref tok, pos;
  std::vector<LayerRefs> layers;
  Tape::Ref cls_w, cls_b;
};

template <typename ParamsT, typename LeafFn>
ParamRefs bind_params(ParamsT& p, LeafFn leaf) {
  ParamRefs r;
  r.tok = leaf(p.token_embedding);
  r.pos = leaf(p.position_embedding);
  r.layers.reserve(p.layers.size());
  for (auto& l : p.layers) {
    LayerRefs lr;
    lr.attn_norm_gain = leaf(l.attn_norm_gain);
    lr.attn_norm_shift = leaf(l.attn_norm_shift);
    lr.wq = leaf(l.wq);
    lr.bq = leaf(l.bq);
    lr.wk = leaf(l.wk);
    lr.bk = leaf(l.bk);
    lr.wv = leaf(l.wv);
    lr.bv = leaf(l.bv);
    lr.wo = leaf(l.wo);
    lr.bo = leaf(l.bo);
    lr.ff_norm_gain = leaf(l.ff_norm_gain);
    lr.ff_norm_shift = leaf(l.ff_norm_shift);
    lr.ff1_w = leaf(l.ff1_w);
    lr.ff1_b = leaf(l.ff1_b);
    lr.ff2_w = leaf(l.ff2_w);
    lr.ff2_b = leaf(l.ff2_b);
    r.layers.push_back(lr);
  }
  r.cls_w = leaf(p.classifier_w);
  r.cls_b = leaf(p.classifier_b);
  return r;
}

Tape::Ref encoder_forward_impl(Tape& tape, const ParamRefs& pr, const ModelConfig& config,
                               std::span<const int> token_ids,
                               std::span<const std::uint8_t> real, int batch,
                               int seq_len) {
  config.validate();
  if (batch < 1 || seq_len < 1) throw DimensionError("batch and seq_len must be positive");
  if (seq_len > config.max_len) {
    throw ConfigError("sequence length " + std::to_string(seq_len) + " exceeds max_len " +
                      std::to_string(config.max_len));
  }
  const std::size_t expected =
      static_cast<std::size_t>(batch) * static_cast<std::size_t>(seq_len);
  if (token_ids.size() != expected || real.size() != expected) {
    throw DimensionError("token_ids/pad mask must be [batch x seq_len]");
  }

  const int n = seq_len, B = batch;
  const int H = config.num_heads, dk = config.head_dim();
  const bool dense = config.attention_mode == AttentionMode::kFull;

  // One base pattern per forward, specialized per sequence by its padding.
  const AttentionMask base =
      dense ? full_mask(n) : build_mask(config.sparsity, n);
  std::vector<std::shared_ptr<const AttentionMask>> seq_mask(B);
  std::vector<std::shared_ptr<const Tensor>> seq_additive(B);
  for (int b = 0; b < B; ++b) {
    std::vector<std::uint8_t> keep(real.begin() + static_cast<std::size_t>(b) * n,
                                   real.begin() + static_cast<std::size_t>(b + 1) * n);
    auto eff = std::make_shared<const AttentionMask>(apply_key_padding(base, keep));
    if (dense) {
      seq_additive[b] = std::make_shared<const Tensor>(additive_mask_tensor(*eff));
    }
    seq_mask[b] = std::move(eff);
  }

  std::vector<int> ids(token_ids.begin(), token_ids.end());
  std::vector<int> pos_ids(expected);
  std::vector<int> cls_rows(B);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < n; ++t) pos_ids[static_cast<std::size_t>(b) * n + t] = t;
    cls_rows[b] = b * n;
  }

  Tape::Ref x = tape.add(tape.embed(pr.tok, std::move(ids)),
                         tape.embed(pr.pos, std::move(pos_ids)));

  for (const LayerRefs& l : pr.layers) {
    Tape::Ref normed = tape.layer_norm(x, l.attn_norm_gain, l.attn_norm_shift, kNormEps);
    Tape::Ref q = tape.add_bias(tape.matmul(normed, l.wq), l.bq);
    Tape::Ref k = tape.add_bias(tape.matmul(normed, l.wk), l.bk);
    Tape::Ref v = tape.add_bias(tape.matmul(normed, l.wv), l.bv);

    std::vector<Tape::Ref> blocks;
    blocks.reserve(static_cast<std::size_t>(B) * H);
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < H; ++h) {
        Tape::Ref qb = tape.slice(q, b * n, n, h * dk, dk);
        Tape::Ref kb = tape.slice(k, b * n, n, h * dk, dk);
        Tape::Ref vb = tape.slice(v, b * n, n, h * dk, dk);
        blocks.push_back(dense ? attend_dense(tape, qb, kb, vb, seq_additive[b])
                               : attend_sparse(tape, qb, kb, vb, seq_mask[b]));
      }
    }
    Tape::Ref merged = tape.assemble_blocks(blocks, B, H);
    x = tape.add(x, tape.add_bias(tape.matmul(merged, l.wo), l.bo));

    Tape::Ref ff_normed = tape.layer_norm(x, l.ff_norm_gain, l.ff_norm_shift, kNormEps);
    Tape::Ref hidden = tape.gelu(tape.add_bias(tape.matmul(ff_normed, l.ff1_w), l.ff1_b));
    x = tape.add(x, tape.add_bias(tape.matmul(hidden, l.ff2_w), l.ff2_b));
  }

  Tape::Ref pooled = tape.gather_rows(x, std::move(cls_rows));
  return tape.add_bias(tape.matmul(pooled, pr.cls_w), pr.cls_b);
}

}  // namespace

Tape::Ref encoder_forward(Tape& tape, Parameters& params, const ModelConfig& config,
                          std::span<const int> token_ids,
                          std::span<const std::uint8_t> real, int batch, int seq_len) {
  ParamRefs refs = bind_params(params, [&](Tensor& t) { return tape.watch(t); });
  return encoder_forward_impl(tape, refs, config, token_ids, real, batch, seq_len);
}

Tensor forward(const Parameters& params, const ModelConfig& config,
               std::span<const int> token_ids, std::span<const std::uint8_t> real,
               int batch, int seq_len) {
  Tape tape;
  ParamRefs refs = bind_params(params, [&](const Tensor& t) { return tape.view(t); });
  return tape.value(encoder_forward_impl(tape, refs, config, token_ids, real, batch, seq_len));
}

ModelConfig full_size_teacher_config() {
  ModelConfig c;
  c.num_layers = 12;
  c.num_heads = 12;
  c.d_model = 768;
  c.d_ff = 3072;
  c.vocab_size = 30522;
  c.max_len = 512;
  c.num_classes = 2;
  c.attention_mode = AttentionMode::kFull;
  return c;
}

ModelConfig full_size_student_config() {
  ModelConfig c = full_size_teacher_config();
  c.num_layers = 3;
  c.num_heads = 4;
  return c;
}

}  // namespace sdbert

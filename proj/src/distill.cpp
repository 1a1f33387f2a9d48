#include "sdbert/distill.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "sdbert/rng.hpp"

namespace sdbert {

namespace {
// Seed streams so init and per-epoch shuffles are independent.
constexpr std::uint64_t kInitStream = 0x696e6974ULL;
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;
}  // namespace

void DistillConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must be in [0, 1]");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adam_eps > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
    throw ConfigError("adam moment decays must be in [0, 1)");
  }
}

std::string report_to_json(const TrainReport& report) {
  nlohmann::json j;
  j["accuracy"] = report.final_accuracy;
  j["wall_clock_seconds"] = report.wall_clock_seconds;
  j["epochs"] = nlohmann::json::array();
  for (std::size_t i = 0; i < report.epoch_losses.size(); ++i) {
    const LossBreakdown& b = report.epoch_losses[i];
    j["epochs"].push_back({{"epoch", i + 1},
                           {"ce", b.ce},
                           {"distill", b.distill},
                           {"combined", b.combined}});
  }
  return j.dump(2);
}

void save_report(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << report_to_json(report) << '\n';
  if (!out) throw DataError("error writing " + path.string());
}

Tape::Ref ce_loss(Tape& tape, Tape::Ref logits, const std::vector<int>& labels) {
  const Tensor& z = tape.value(logits);
  if (z.ndim() != 2) throw DimensionError("ce_loss expects [batch x classes] logits");
  const int B = z.rows(), C = z.cols();
  if (static_cast<int>(labels.size()) != B) {
    throw DimensionError("ce_loss: got " + std::to_string(labels.size()) +
                         " labels for batch " + std::to_string(B));
  }
  for (int l : labels) {
    if (l < 0 || l >= C) {
      throw DimensionError("ce_loss: label " + std::to_string(l) + " outside [0, " +
                           std::to_string(C) + ")");
    }
  }

  auto probs = std::make_shared<std::vector<double>>(z.values.size());
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    const double* row = z.values.data() + static_cast<std::size_t>(b) * C;
    double* prow = probs->data() + static_cast<std::size_t>(b) * C;
    double max = row[0];
    for (int c = 1; c < C; ++c) max = std::max(max, row[c]);
    double sum = 0.0;
    for (int c = 0; c < C; ++c) {
      prow[c] = std::exp(row[c] - max);
      sum += prow[c];
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < C; ++c) prow[c] *= inv;
    total += max + std::log(sum) - row[labels[b]];
  }

  auto labels_ptr = std::make_shared<std::vector<int>>(labels);
  return tape.custom(
      Tensor::scalar(total / B), {logits},
      [logits, B, C, probs, labels_ptr](Tape& t, Tape::Ref self) {
        const double g = t.grad_at(self)[0] / B;
        auto& gz = t.grad_buffer(logits);
        for (int b = 0; b < B; ++b) {
          const double* prow = probs->data() + static_cast<std::size_t>(b) * C;
          double* grow = gz.data() + static_cast<std::size_t>(b) * C;
          for (int c = 0; c < C; ++c) {
            grow[c] += g * (prow[c] - (c == (*labels_ptr)[b] ? 1.0 : 0.0));
          }
        }
      });
}

double ce_loss(const Tensor& logits, const std::vector<int>& labels) {
  Tape tape;
  return tape.scalar_value(ce_loss(tape, tape.view(logits), labels));
}

Tape::Ref distill_loss(Tape& tape, Tape::Ref student_logits, const Tensor& teacher_logits) {
  const Tensor& zs = tape.value(student_logits);
  if (zs.ndim() != 2 || !zs.same_shape(teacher_logits)) {
    throw DimensionError("distill_loss: student logits " + zs.shape_str() +
                         " vs teacher " + teacher_logits.shape_str());
  }
  const int B = zs.rows();
  Tape::Ref diff = tape.sub(student_logits, tape.constant(teacher_logits));
  return tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / B);
}

double distill_loss(const Tensor& student_logits, const Tensor& teacher_logits) {
  Tape tape;
  return tape.scalar_value(distill_loss(tape, tape.view(student_logits), teacher_logits));
}

CombinedLoss combined_loss(Tape& tape, double alpha, Tape::Ref student_logits,
                           const std::vector<int>& labels, const Tensor& teacher_logits) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must be in [0, 1]");
  Tape::Ref ce = ce_loss(tape, student_logits, labels);
  Tape::Ref distill = distill_loss(tape, student_logits, teacher_logits);
  Tape::Ref combined = tape.add(tape.scale(ce, alpha), tape.scale(distill, 1.0 - alpha));
  CombinedLoss out;
  out.ref = combined;
  out.breakdown = {tape.scalar_value(ce), tape.scalar_value(distill),
                   tape.scalar_value(combined)};
  return out;
}

LossBreakdown combined_loss(double alpha, const Tensor& student_logits,
                            const std::vector<int>& labels, const Tensor& teacher_logits) {
  Tape tape;
  return combined_loss(tape, alpha, tape.view(student_logits), labels, teacher_logits)
      .breakdown;
}

Adam::Adam(std::vector<Tensor*> params, const DistillConfig& config)
    : params_(std::move(params)),
      lr_(config.learning_rate),
      beta1_(config.adam_beta1),
      beta2_(config.adam_beta2),
      eps_(config.adam_eps) {
  config.validate();
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor* p : params_) {
    m_.emplace_back(p->numel(), 0.0);
    v_.emplace_back(p->numel(), 0.0);
  }
}

void Adam::step() {
  ++step_count_;
  beta1_pow_ *= beta1_;
  beta2_pow_ *= beta2_;
  const double inv_bias1 = 1.0 / (1.0 - beta1_pow_);
  const double inv_bias2 = 1.0 / (1.0 - beta2_pow_);
  for (std::size_t t = 0; t < params_.size(); ++t) {
    Tensor& p = *params_[t];
    if (p.grad.size() != p.numel()) {
      throw NumericError("Adam::step: parameter gradient missing");
    }
    auto& m = m_[t];
    auto& v = v_[t];
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.values[i] -= lr_ * (m[i] * inv_bias1) / (std::sqrt(v[i] * inv_bias2) + eps_);
    }
    ensure_finite(p.values, "optimizer update");
  }
}

namespace {

std::vector<Tensor*> tensor_list(Parameters& p) {
  std::vector<Tensor*> out;
  for (auto& [name, tensor] : named_tensors(p)) out.push_back(tensor);
  return out;
}

// Shared mini-batch loop: when `teacher` is non-null the loss is
// combined_loss against its per-batch logits, otherwise pure cross entropy.
std::pair<Parameters, TrainReport> run_training(
    const std::vector<Example>& train_data, const std::vector<Example>& eval_data,
    const ModelConfig& model_config, const DistillConfig& config,
    const Vocabulary& vocab, const Parameters* teacher,
    const ModelConfig* teacher_config) {
  const auto t0 = std::chrono::steady_clock::now();
  model_config.validate();
  config.validate();
  if (train_data.empty() || eval_data.empty()) {
    throw DataError("training requires non-empty train and eval data");
  }
  if (vocab.size() > model_config.vocab_size) {
    throw ConfigError("vocabulary size " + std::to_string(vocab.size()) +
                      " exceeds model vocab_size " +
                      std::to_string(model_config.vocab_size));
  }

  const int n = model_config.max_len;
  Parameters params = init_params(model_config, mix_seed(config.seed, kInitStream));
  Adam optimizer(tensor_list(params), config);

  TrainReport report;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::uint64_t shuffle_seed =
        mix_seed(config.seed, mix_seed(kShuffleStream, static_cast<std::uint64_t>(epoch)));
    double sum_ce = 0.0, sum_distill = 0.0;
    int batches = 0;
    for (const EncodedBatch& batch :
         batch_iter(train_data, vocab, n, config.batch_size, shuffle_seed)) {
      Tape tape;
      Tape::Ref logits = encoder_forward(tape, params, model_config, batch.token_ids,
                                         batch.real, batch.batch, batch.seq_len);
      LossBreakdown b;
      Tape::Ref loss;
      if (teacher != nullptr) {
        const Tensor teacher_logits =
            forward(*teacher, *teacher_config, batch.token_ids, batch.real, batch.batch,
                    batch.seq_len);
        CombinedLoss cl =
            combined_loss(tape, config.alpha, logits, batch.labels, teacher_logits);
        loss = cl.ref;
        b = cl.breakdown;
      } else {
        loss = ce_loss(tape, logits, batch.labels);
        b.ce = tape.scalar_value(loss);
        b.distill = 0.0;
        b.combined = 1.0 * b.ce + 0.0 * b.distill;
      }
      tape.backward(loss);
      optimizer.step();
      sum_ce += b.ce;
      sum_distill += b.distill;
      report.batch_losses.push_back(b.combined);
      ++batches;
    }
    LossBreakdown epoch_loss;
    epoch_loss.ce = sum_ce / batches;
    epoch_loss.distill = sum_distill / batches;
    const double a = teacher != nullptr ? config.alpha : 1.0;
    epoch_loss.combined = a * epoch_loss.ce + (1.0 - a) * epoch_loss.distill;
    report.epoch_losses.push_back(epoch_loss);
  }
  report.total_updates = optimizer.steps();
  report.final_accuracy = evaluate(params, model_config, eval_data, vocab);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(params), std::move(report)};
}

}  // namespace

std::pair<Parameters, TrainReport> train_teacher(const std::vector<Example>& train_data,
                                                 const std::vector<Example>& eval_data,
                                                 const ModelConfig& model_config,
                                                 const DistillConfig& train_config,
                                                 const Vocabulary& vocab) {
  return run_training(train_data, eval_data, model_config, train_config, vocab, nullptr,
                      nullptr);
}

std::pair<Parameters, TrainReport> distill_student(
    const Parameters& teacher, const ModelConfig& teacher_config,
    const ModelConfig& student_config, const std::vector<Example>& train_data,
    const std::vector<Example>& eval_data, const DistillConfig& distill_config,
    const Vocabulary& vocab) {
  teacher_config.validate();
  student_config.validate();
  if (teacher_config.vocab_size != student_config.vocab_size ||
      teacher_config.num_classes != student_config.num_classes) {
    throw ConfigError("teacher and student must share vocab_size and num_classes");
  }
  return run_training(train_data, eval_data, student_config, distill_config, vocab,
                      &teacher, &teacher_config);
}

double evaluate(const Parameters& params, const ModelConfig& config,
                const std::vector<Example>& data, const Vocabulary& vocab,
                int batch_size) {
  config.validate();
  if (data.empty()) throw DataError("evaluate: empty data");
  if (batch_size < 1) throw ConfigError("evaluate: batch_size must be positive");

  const int n = config.max_len;
  std::vector<int> ids, batch_ids;
  std::vector<std::uint8_t> mask, batch_mask;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    const int b = static_cast<int>(end - start);
    batch_ids.clear();
    batch_mask.clear();
    for (std::size_t i = start; i < end; ++i) {
      encode(vocab, data[i].text, n, ids, mask);
      batch_ids.insert(batch_ids.end(), ids.begin(), ids.end());
      batch_mask.insert(batch_mask.end(), mask.begin(), mask.end());
    }
    const Tensor logits = forward(params, config, batch_ids, batch_mask, b, n);
    for (int i = 0; i < b; ++i) {
      int best = 0;
      for (int c = 1; c < config.num_classes; ++c) {
        if (logits.at(i, c) > logits.at(i, best)) best = c;  // ties keep lower index
      }
      if (best == data[start + i].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace sdbert

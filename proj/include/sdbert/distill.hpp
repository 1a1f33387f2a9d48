#ifndef SDBERT_DISTILL_HPP_
#define SDBERT_DISTILL_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sdbert/data.hpp"
#include "sdbert/model.hpp"
#include "sdbert/tape.hpp"

namespace sdbert {

// Mini-batch training settings; alpha mixes the supervised term against the
// teacher-matching term (1 = pure supervision).
struct DistillConfig {
  double alpha = 0.5;
  int epochs = 1;
  int batch_size = 16;
  double learning_rate = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossBreakdown {
  double ce = 0.0;
  double distill = 0.0;
  double combined = 0.0;  // always alpha*ce + (1-alpha)*distill, same arithmetic
};

struct TrainReport {
  double final_accuracy = 0.0;
  std::vector<LossBreakdown> epoch_losses;
  double wall_clock_seconds = 0.0;
  // In-memory detail for reproducibility checks; not part of the JSON form.
  std::vector<double> batch_losses;
  std::int64_t total_updates = 0;
};

// JSON document with fields accuracy, wall_clock_seconds,
// epochs: [{epoch, ce, distill, combined}].
std::string report_to_json(const TrainReport& report);
void save_report(const std::filesystem::path& path, const TrainReport& report);

// Batch-mean cross entropy: mean_b of -log softmax(logits)[label_b].
Tape::Ref ce_loss(Tape& tape, Tape::Ref logits, const std::vector<int>& labels);
double ce_loss(const Tensor& logits, const std::vector<int>& labels);

// Batch-mean squared Euclidean distance between student and teacher logits,
// summed over classes. Differentiable in the student side only.
Tape::Ref distill_loss(Tape& tape, Tape::Ref student_logits, const Tensor& teacher_logits);
double distill_loss(const Tensor& student_logits, const Tensor& teacher_logits);

struct CombinedLoss {
  Tape::Ref ref;
  LossBreakdown breakdown;
};

// alpha*ce + (1-alpha)*distill. The distillation penalty is added (a
// positive term pulling student logits toward the teacher's).
CombinedLoss combined_loss(Tape& tape, double alpha, Tape::Ref student_logits,
                           const std::vector<int>& labels, const Tensor& teacher_logits);
LossBreakdown combined_loss(double alpha, const Tensor& student_logits,
                            const std::vector<int>& labels, const Tensor& teacher_logits);

// Adaptive-moment optimizer over a fixed parameter list; update order follows
// the list, so runs are reproducible.
class Adam {
 public:
  Adam(std::vector<Tensor*> params, const DistillConfig& config);
  // Applies one update from the .grad slots (which backward() always
  // populates on watched parameters).
  void step();
  std::int64_t steps() const { return step_count_; }

 private:
  std::vector<Tensor*> params_;
  double lr_, beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_pow_ = 1.0, beta2_pow_ = 1.0;
  std::int64_t step_count_ = 0;
};

// Supervised training of a fresh model on cross entropy.
std::pair<Parameters, TrainReport> train_teacher(const std::vector<Example>& train_data,
                                                 const std::vector<Example>& eval_data,
                                                 const ModelConfig& model_config,
                                                 const DistillConfig& train_config,
                                                 const Vocabulary& vocab);

// Trains a fresh student against labels and the frozen teacher's logits
// (recomputed per batch). Only student parameters are updated; the teacher
// is bit-identical before and after.
std::pair<Parameters, TrainReport> distill_student(
    const Parameters& teacher, const ModelConfig& teacher_config,
    const ModelConfig& student_config, const std::vector<Example>& train_data,
    const std::vector<Example>& eval_data, const DistillConfig& distill_config,
    const Vocabulary& vocab);

// Fraction of examples whose argmax logit equals the label; ties break
// toward the lower class index.
double evaluate(const Parameters& params, const ModelConfig& config,
                const std::vector<Example>& data, const Vocabulary& vocab,
                int batch_size = 32);

}  // namespace sdbert

#endif  // SDBERT_DISTILL_HPP_

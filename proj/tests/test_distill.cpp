#include <doctest.h>

#include <cmath>

#include "sdbert/distill.hpp"
#include "sdbert/grad_check.hpp"
#include "test_util.hpp"

using namespace sdbert;
using sdbert::testing::random_tensor;

namespace {

ModelConfig tiny_config(int layers = 1, int heads = 2) {
  ModelConfig c;
  c.num_layers = layers;
  c.num_heads = heads;
  c.d_model = 16;
  c.d_ff = 32;
  c.vocab_size = 64;
  c.max_len = 16;
  c.num_classes = 2;
  c.attention_mode = AttentionMode::kSparse;
  c.sparsity.global_tokens = 1;
  c.sparsity.window_radius = 2;
  c.sparsity.random_keys = 1;
  c.sparsity.seed = 2;
  return c;
}

DistillConfig quick_settings(double alpha, int epochs, std::uint64_t seed) {
  DistillConfig c;
  c.alpha = alpha;
  c.epochs = epochs;
  c.batch_size = 16;
  c.learning_rate = 1e-2;
  c.seed = seed;
  return c;
}

// A model that ignores its input: zero embeddings/weights leave the pooled
// state at zero, so the logits equal the classifier bias.
Parameters constant_logit_model(const ModelConfig& c, double z0, double z1) {
  Parameters p = init_params(c, 0);
  for (auto& [name, tensor] : named_tensors(p)) {
    if (name != "classifier_b" && name.find("norm_gain") == std::string::npos) {
      std::fill(tensor->values.begin(), tensor->values.end(), 0.0);
    }
  }
  p.classifier_b.values = {z0, z1};
  return p;
}

}  // namespace

TEST_CASE("ce_loss: uniform, saturated, and hand-evaluated logits") {
  CHECK(ce_loss(Tensor::matrix({{0, 0}}), {0}) == doctest::Approx(std::log(2.0)));
  CHECK(ce_loss(Tensor::matrix({{0, 0}}), {1}) == doctest::Approx(std::log(2.0)));
  CHECK(ce_loss(Tensor::matrix({{30, -30}}), {0}) <= 1e-9);
  CHECK(ce_loss(Tensor::matrix({{1, -1}}), {0}) == doctest::Approx(0.1269).epsilon(1e-3));
  // Independent route: direct formula.
  const double direct = -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0)));
  CHECK(ce_loss(Tensor::matrix({{1, -1}}), {0}) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("ce_loss validates labels and batching") {
  CHECK_THROWS_AS(ce_loss(Tensor::matrix({{0, 0}}), {2}), DimensionError);
  CHECK_THROWS_AS(ce_loss(Tensor::matrix({{0, 0}}), {-1}), DimensionError);
  CHECK_THROWS_AS(ce_loss(Tensor::matrix({{0, 0}}), {0, 1}), DimensionError);
}

TEST_CASE("ce_loss is batch-averaged") {
  const double both = ce_loss(Tensor::matrix({{1, -1}, {0, 0}}), {0, 1});
  const double a = ce_loss(Tensor::matrix({{1, -1}}), {0});
  const double b = ce_loss(Tensor::matrix({{0, 0}}), {1});
  CHECK(both == doctest::Approx(0.5 * (a + b)));
}

TEST_CASE("distill_loss: zero at equality, known value, analytic gradient") {
  const Tensor z = random_tensor({3, 2}, 1);
  CHECK(distill_loss(z, z) == 0.0);

  const Tensor zs = Tensor::matrix({{0, 0}});
  const Tensor zb = Tensor::matrix({{1, -1}});
  CHECK(distill_loss(zs, zb) == doctest::Approx(2.0));

  Tensor probe = zs;
  probe.requires_grad = true;
  Tape tape;
  Tape::Ref ref = tape.watch(probe);
  tape.backward(distill_loss(tape, ref, zb));
  CHECK(probe.grad[0] == doctest::Approx(-2.0));
  CHECK(probe.grad[1] == doctest::Approx(2.0));

  CHECK_THROWS_AS(distill_loss(zs, random_tensor({2, 2}, 3)), DimensionError);
}

TEST_CASE("distill_loss is non-negative and zero only at equality") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor a = random_tensor({4, 3}, seed);
    const Tensor b = random_tensor({4, 3}, seed + 100);
    const double loss = distill_loss(a, b);
    CHECK(loss >= 0.0);
    CHECK(loss > 0.0);  // random tensors differ
  }
}

TEST_CASE("combined_loss: bitwise identities at the alpha endpoints") {
  const Tensor zs = random_tensor({2, 2}, 5);
  const Tensor zb = random_tensor({2, 2}, 6);
  const std::vector<int> labels = {0, 1};

  const LossBreakdown at1 = combined_loss(1.0, zs, labels, zb);
  CHECK(at1.combined == ce_loss(zs, labels));  // exact
  const LossBreakdown at0 = combined_loss(0.0, zs, labels, zb);
  CHECK(at0.combined == distill_loss(zs, zb));  // exact

  const LossBreakdown same = combined_loss(0.0, zs, labels, zs);
  CHECK(same.combined == 0.0);
}

TEST_CASE("combined_loss: the hand-derived mixed case") {
  const LossBreakdown b =
      combined_loss(0.5, Tensor::matrix({{0, 0}}), {0}, Tensor::matrix({{1, -1}}));
  CHECK(b.ce == doctest::Approx(std::log(2.0)));
  CHECK(b.distill == doctest::Approx(2.0));
  CHECK(b.combined == doctest::Approx(1.3466).epsilon(1e-3));
  CHECK(b.combined == 0.5 * b.ce + 0.5 * b.distill);
}

TEST_CASE("combined_loss is monotone-linear in alpha") {
  const Tensor zs = random_tensor({3, 2}, 9);
  const Tensor zb = random_tensor({3, 2}, 10);
  const std::vector<int> labels = {1, 0, 1};
  const double ce = ce_loss(zs, labels);
  const double dist = distill_loss(zs, zb);
  for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const LossBreakdown b = combined_loss(alpha, zs, labels, zb);
    CHECK(b.combined == doctest::Approx(alpha * (ce - dist) + dist).epsilon(1e-12));
    CHECK(b.combined == b.ce * alpha + (1.0 - alpha) * b.distill);
  }
  CHECK_THROWS_AS(combined_loss(1.5, zs, labels, zb), ConfigError);
  CHECK_THROWS_AS(combined_loss(-0.1, zs, labels, zb), ConfigError);
}

TEST_CASE("loss gradients match finite differences") {
  const std::vector<int> labels = {0, 1, 1};
  const Tensor zb = random_tensor({3, 2}, 30);

  const TapeFn ce_f = [&](Tape& t, Tape::Ref x) { return ce_loss(t, x, labels); };
  CHECK(grad_check(ce_f, random_tensor({3, 2}, 31)) <= 1e-4);

  const TapeFn distill_f = [&](Tape& t, Tape::Ref x) { return distill_loss(t, x, zb); };
  CHECK(grad_check(distill_f, random_tensor({3, 2}, 32)) <= 1e-4);

  const TapeFn combined_f = [&](Tape& t, Tape::Ref x) {
    return combined_loss(t, 0.3, x, labels, zb).ref;
  };
  CHECK(grad_check(combined_f, random_tensor({3, 2}, 33)) <= 1e-4);
}

TEST_CASE("evaluate: forced logits and tie-breaking") {
  const ModelConfig c = tiny_config();
  const Parameters p = constant_logit_model(c, 1.0, -1.0);

  std::vector<Example> zeros(4, {"some words here", 0});
  CHECK(evaluate(p, c, zeros, Vocabulary()) == 1.0);

  std::vector<Example> ones(4, {"some words here", 1});
  CHECK(evaluate(p, c, ones, Vocabulary()) == 0.0);

  std::vector<Example> mixed;
  for (int i = 0; i < 3; ++i) mixed.push_back({"text", 0});
  for (int i = 0; i < 7; ++i) mixed.push_back({"text", 1});
  CHECK(evaluate(p, c, mixed, Vocabulary()) == doctest::Approx(0.3));

  // Equal logits: ties go to the lower class index.
  const Parameters tied = constant_logit_model(c, 0.5, 0.5);
  CHECK(evaluate(tied, c, zeros, Vocabulary()) == 1.0);
  CHECK(evaluate(tied, c, ones, Vocabulary()) == 0.0);

  // A constant-output model scores exactly the majority share.
  std::vector<Example> balanced;
  for (int i = 0; i < 5; ++i) balanced.push_back({"text", 0});
  for (int i = 0; i < 5; ++i) balanced.push_back({"text", 1});
  CHECK(evaluate(p, c, balanced, Vocabulary()) == 0.5);

  CHECK_THROWS_AS(evaluate(p, c, {}, Vocabulary()), DataError);
}

TEST_CASE("a converged model memorizes its own training set") {
  const auto train = synth_dataset(16, 41, 0.0);
  const Vocabulary vocab = build_vocab(train, 96);
  DistillConfig cfg = quick_settings(1.0, 20, 13);
  cfg.batch_size = 8;
  auto [params, report] = train_teacher(train, train, tiny_config(), cfg, vocab);
  CHECK(evaluate(params, tiny_config(), train, vocab) == 1.0);
}

TEST_CASE("train_teacher learns the noiseless synthetic task") {
  const auto all = synth_dataset(300, 7, 0.0);
  const std::vector<Example> train(all.begin(), all.begin() + 240);
  const std::vector<Example> eval(all.begin() + 240, all.end());
  const Vocabulary vocab = build_vocab(train, 64);

  auto [params, report] =
      train_teacher(train, eval, tiny_config(), quick_settings(1.0, 3, 7), vocab);
  CHECK(report.final_accuracy >= 0.95);
  CHECK(report.wall_clock_seconds > 0.0);
  REQUIRE(report.epoch_losses.size() == 3);
  // Loss should come down over training.
  CHECK(report.epoch_losses.back().ce < report.epoch_losses.front().ce);
}

TEST_CASE("train_teacher: one update per epoch when batch covers the dataset") {
  const auto all = synth_dataset(24, 3, 0.0);
  const std::vector<Example> train(all.begin(), all.begin() + 20);
  const std::vector<Example> eval(all.begin() + 20, all.end());
  const Vocabulary vocab = build_vocab(train, 64);
  DistillConfig cfg = quick_settings(1.0, 1, 5);
  cfg.batch_size = static_cast<int>(train.size());
  auto [params, report] = train_teacher(train, eval, tiny_config(), cfg, vocab);
  CHECK(report.total_updates == 1);
  CHECK(report.batch_losses.size() == 1);
}

TEST_CASE("train_teacher is reproducible per seed") {
  const auto all = synth_dataset(60, 13, 0.0);
  const std::vector<Example> train(all.begin(), all.begin() + 48);
  const std::vector<Example> eval(all.begin() + 48, all.end());
  const Vocabulary vocab = build_vocab(train, 64);
  const DistillConfig cfg = quick_settings(1.0, 2, 11);

  auto [p1, r1] = train_teacher(train, eval, tiny_config(), cfg, vocab);
  auto [p2, r2] = train_teacher(train, eval, tiny_config(), cfg, vocab);
  CHECK(parameters_fingerprint(p1) == parameters_fingerprint(p2));
  CHECK(r1.final_accuracy == r2.final_accuracy);
  REQUIRE(r1.batch_losses.size() == r2.batch_losses.size());
  for (std::size_t i = 0; i < r1.batch_losses.size(); ++i) {
    CHECK(r1.batch_losses[i] == r2.batch_losses[i]);
  }

  auto [p3, r3] = train_teacher(train, eval, tiny_config(),
                                quick_settings(1.0, 2, 12), vocab);
  CHECK(parameters_fingerprint(p1) != parameters_fingerprint(p3));
}

TEST_CASE("training rejects empty datasets") {
  const Vocabulary vocab;
  CHECK_THROWS_AS(
      train_teacher({}, {{"x y", 0}}, tiny_config(), quick_settings(1, 1, 1), vocab),
      DataError);
  CHECK_THROWS_AS(
      train_teacher({{"x y", 0}}, {}, tiny_config(), quick_settings(1, 1, 1), vocab),
      DataError);
}

TEST_CASE("distillation freezes the teacher and mirrors supervised training at alpha=1") {
  const auto all = synth_dataset(120, 17, 0.0);
  const std::vector<Example> train(all.begin(), all.begin() + 96);
  const std::vector<Example> eval(all.begin() + 96, all.end());
  const Vocabulary vocab = build_vocab(train, 96);

  const ModelConfig teacher_cfg = tiny_config(2, 4);
  auto [teacher, teacher_report] =
      train_teacher(train, eval, teacher_cfg, quick_settings(1.0, 2, 19), vocab);

  const std::uint64_t before = parameters_fingerprint(teacher);
  const ModelConfig student_cfg = tiny_config(1, 2);
  const DistillConfig cfg = quick_settings(1.0, 2, 23);
  auto [student, student_report] =
      distill_student(teacher, teacher_cfg, student_cfg, train, eval, cfg, vocab);
  CHECK(parameters_fingerprint(teacher) == before);

  // alpha=1 reduces the objective to plain cross entropy: the per-batch loss
  // sequence and final parameters match supervised training bit for bit.
  auto [plain, plain_report] = train_teacher(train, eval, student_cfg, cfg, vocab);
  REQUIRE(student_report.batch_losses.size() == plain_report.batch_losses.size());
  for (std::size_t i = 0; i < student_report.batch_losses.size(); ++i) {
    CHECK(student_report.batch_losses[i] == plain_report.batch_losses[i]);
  }
  CHECK(parameters_fingerprint(student) == parameters_fingerprint(plain));
  // Distill curve is reported alongside ce even when it carries no weight.
  CHECK(student_report.epoch_losses.back().distill > 0.0);
}

TEST_CASE("a distilled student keeps most of the teacher's accuracy") {
  const auto all = synth_dataset(300, 29, 0.0);
  const std::vector<Example> train(all.begin(), all.begin() + 240);
  const std::vector<Example> eval(all.begin() + 240, all.end());
  const Vocabulary vocab = build_vocab(train, 96);

  const ModelConfig teacher_cfg = tiny_config(2, 4);
  auto [teacher, teacher_report] =
      train_teacher(train, eval, teacher_cfg, quick_settings(1.0, 3, 31), vocab);
  REQUIRE(teacher_report.final_accuracy >= 0.9);

  auto [student, student_report] =
      distill_student(teacher, teacher_cfg, tiny_config(1, 2), train, eval,
                      quick_settings(0.5, 3, 37), vocab);
  CHECK(student_report.final_accuracy >= 0.9 * teacher_report.final_accuracy);
}

TEST_CASE("distill_student validates compatibility") {
  ModelConfig teacher_cfg = tiny_config();
  ModelConfig student_cfg = tiny_config();
  student_cfg.vocab_size = teacher_cfg.vocab_size + 1;
  const Parameters teacher = init_params(teacher_cfg, 1);
  CHECK_THROWS_AS(distill_student(teacher, teacher_cfg, student_cfg, {{"x", 0}},
                                  {{"y", 1}}, quick_settings(0.5, 1, 1), Vocabulary()),
                  ConfigError);
}

TEST_CASE("report JSON carries accuracy, wall clock and per-epoch curves") {
  TrainReport report;
  report.final_accuracy = 0.75;
  report.wall_clock_seconds = 1.5;
  report.epoch_losses = {{0.5, 2.0, 1.25}, {0.25, 1.0, 0.625}};
  const std::string json = report_to_json(report);
  CHECK(json.find("\"accuracy\": 0.75") != std::string::npos);
  CHECK(json.find("\"wall_clock_seconds\": 1.5") != std::string::npos);
  CHECK(json.find("\"epoch\": 2") != std::string::npos);
  CHECK(json.find("\"distill\": 2.0") != std::string::npos);
}

TEST_CASE("optimizer settings are validated") {
  DistillConfig bad = quick_settings(0.5, 1, 1);
  bad.alpha = 1.2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = quick_settings(0.5, 0, 1);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = quick_settings(0.5, 1, 1);
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier end-to-end runs live here rather than in the unit tests.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sdbert/bench.hpp"
#include "sdbert/distill.hpp"
#include "sdbert/grad_check.hpp"
#include "sdbert/model.hpp"
#include "sdbert/rng.hpp"
#include "sdbert/run_config.hpp"
#include "sdbert/sparse_attention.hpp"

using namespace sdbert;

namespace {

using Clock = std::chrono::steady_clock;

int g_failures = 0;

void report(int num, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", num, name,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  return Tensor::random_uniform(std::move(shape), scale, rng);
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

SparsityConfig sp(int g, int w, int r, std::uint64_t seed = 0) {
  SparsityConfig c;
  c.global_tokens = g;
  c.window_radius = w;
  c.random_keys = r;
  c.seed = seed;
  return c;
}

// --------------------------------------------------------------------------
// 1. attend_sparse == attend_dense on >= 50 random cases up to n = 64.
// --------------------------------------------------------------------------
void criterion_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20260810);
  double worst = 0.0;
  int cases = 0;
  while (cases < 60) {
    const int n = 1 + static_cast<int>(uniform_below(rng, 64));
    const int d = 1 + static_cast<int>(uniform_below(rng, 12));
    SparsityConfig c;
    switch (cases % 3) {
      case 0: c = sp(0, 0, 0); break;
      case 1: c = sp(n, 3, 2, rng()); break;
      default:
        c = sp(static_cast<int>(uniform_below(rng, n + 1)),
               static_cast<int>(uniform_below(rng, 6)),
               static_cast<int>(uniform_below(rng, 5)), rng());
    }
    const AttentionMask mask = build_mask(c, n);
    const Tensor q = random_tensor({n, d}, rng());
    const Tensor k = random_tensor({n, d}, rng());
    const Tensor v = random_tensor({n, d}, rng());
    const Tensor dense = attend_dense(q, k, v, mask);
    const Tensor sparse = attend_sparse(q, k, v, mask);
    for (std::size_t i = 0; i < dense.values.size(); ++i) {
      worst = std::max(worst, std::fabs(dense.values[i] - sparse.values[i]));
    }
    ++cases;
  }
  const double elapsed = seconds_since(t0);
  report(1, "sparse/dense equivalence", worst <= 1e-10 && elapsed < 10.0,
         fmt("60 cases, max |diff| %.3g, %.2fs", worst, elapsed));
}

// --------------------------------------------------------------------------
// 2. Finite-difference gradient suite at step 1e-5, rel err <= 1e-4.
// --------------------------------------------------------------------------
void criterion_gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name = "none";
  auto track = [&](const char* name, double err) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  };

  track("softmax", grad_check(
                       [](Tape& t, Tape::Ref x) {
                         return t.sum(t.mul(t.softmax_rows(x),
                                            t.constant(random_tensor({4, 6}, 1))));
                       },
                       random_tensor({4, 6}, 2)));

  const AttentionMask mask = build_mask(sp(1, 1, 1, 7), 6);
  const Tensor k0 = random_tensor({6, 4}, 3);
  const Tensor v0 = random_tensor({6, 4}, 4);
  track("attend_dense dQ", grad_check(
                               [&](Tape& t, Tape::Ref x) {
                                 return t.sum(attend_dense(t, x, t.constant(k0),
                                                           t.constant(v0), mask));
                               },
                               random_tensor({6, 4}, 5)));
  track("attend_sparse dQ", grad_check(
                                [&](Tape& t, Tape::Ref x) {
                                  return t.sum(attend_sparse(t, x, t.constant(k0),
                                                             t.constant(v0), mask));
                                },
                                random_tensor({6, 4}, 5)));
  track("attend_sparse dK", grad_check(
                                [&](Tape& t, Tape::Ref x) {
                                  return t.sum(attend_sparse(t, t.constant(k0), x,
                                                             t.constant(v0), mask));
                                },
                                random_tensor({6, 4}, 6)));
  track("attend_sparse dV", grad_check(
                                [&](Tape& t, Tape::Ref x) {
                                  return t.sum(attend_sparse(t, t.constant(k0),
                                                             t.constant(v0), x, mask));
                                },
                                random_tensor({6, 4}, 7)));

  const Tensor gain = random_tensor({6}, 8);
  const Tensor shift = random_tensor({6}, 9);
  track("layer_norm", grad_check(
                          [&](Tape& t, Tape::Ref x) {
                            return t.sum(t.mul(
                                t.layer_norm(x, t.constant(gain), t.constant(shift)),
                                t.constant(random_tensor({5, 6}, 10))));
                          },
                          random_tensor({5, 6}, 11)));

  const Tensor w1 = random_tensor({6, 12}, 12);
  const Tensor b1 = random_tensor({12}, 13);
  const Tensor w2 = random_tensor({12, 6}, 14);
  track("feed_forward", grad_check(
                            [&](Tape& t, Tape::Ref x) {
                              Tape::Ref h = t.gelu(t.add_bias(
                                  t.matmul(x, t.constant(w1)), t.constant(b1)));
                              return t.sum(t.matmul(h, t.constant(w2)));
                            },
                            random_tensor({3, 6}, 15)));

  // Every parameter group of a 1-layer encoder against the CE loss.
  ModelConfig tiny;
  tiny.num_layers = 1;
  tiny.num_heads = 2;
  tiny.d_model = 6;
  tiny.d_ff = 10;
  tiny.vocab_size = 9;
  tiny.max_len = 5;
  tiny.num_classes = 2;
  tiny.attention_mode = AttentionMode::kSparse;
  tiny.sparsity = sp(1, 1, 1, 5);
  std::vector<int> ids;
  std::vector<std::uint8_t> real;
  std::mt19937_64 rng(16);
  for (int i = 0; i < 2 * 5; ++i) {
    const bool pad = (i % 5) == 4;
    ids.push_back(pad ? 0 : static_cast<int>(uniform_below(rng, tiny.vocab_size)));
    real.push_back(pad ? 0 : 1);
  }
  const std::vector<int> labels = {1, 0};

  Parameters base = init_params(tiny, 17);
  Parameters work = base;
  Tape tape;
  tape.backward(ce_loss(tape, encoder_forward(tape, work, tiny, ids, real, 2, 5), labels));
  Parameters fd = base;
  auto fd_named = named_tensors(fd);
  auto work_named = named_tensors(work);
  for (std::size_t group = 0; group < fd_named.size(); ++group) {
    Tensor* ft = fd_named[group].second;
    const Tensor* wt = work_named[group].second;
    double err = 0.0;
    for (std::size_t i = 0; i < ft->values.size(); ++i) {
      const double orig = ft->values[i];
      ft->values[i] = orig + 1e-5;
      const double up = ce_loss(forward(fd, tiny, ids, real, 2, 5), labels);
      ft->values[i] = orig - 1e-5;
      const double down = ce_loss(forward(fd, tiny, ids, real, 2, 5), labels);
      ft->values[i] = orig;
      const double numeric = (up - down) / 2e-5;
      const double analytic = wt->grad[i];
      const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
      err = std::max(err, std::fabs(analytic - numeric) / denom);
    }
    track(("encoder " + fd_named[group].first).c_str(), err);
  }

  const std::vector<int> labels2 = {0, 1, 1};
  const Tensor zb = random_tensor({3, 2}, 18);
  track("ce_loss", grad_check(
                       [&](Tape& t, Tape::Ref x) { return ce_loss(t, x, labels2); },
                       random_tensor({3, 2}, 19)));
  track("distill_loss", grad_check(
                            [&](Tape& t, Tape::Ref x) { return distill_loss(t, x, zb); },
                            random_tensor({3, 2}, 20)));
  track("combined_loss",
        grad_check(
            [&](Tape& t, Tape::Ref x) {
              return combined_loss(t, 0.3, x, labels2, zb).ref;
            },
            random_tensor({3, 2}, 21)));

  const double elapsed = seconds_since(t0);
  report(2, "gradient suite", worst <= 1e-4 && elapsed < 60.0,
         fmt("max rel err %.3g at %s, %.2fs", worst, worst_name.c_str(), elapsed));
}

// --------------------------------------------------------------------------
// 3. Loss-mixing identities at the alpha endpoints plus the hand case.
// --------------------------------------------------------------------------
void criterion_loss_identities() {
  const Tensor zs = random_tensor({4, 2}, 30, 2.0);
  const Tensor zb = random_tensor({4, 2}, 31, 2.0);
  const std::vector<int> labels = {0, 1, 1, 0};

  const bool at1 = combined_loss(1.0, zs, labels, zb).combined == ce_loss(zs, labels);
  const bool at0 = combined_loss(0.0, zs, labels, zb).combined == distill_loss(zs, zb);

  const LossBreakdown hand =
      combined_loss(0.5, Tensor::matrix({{0, 0}}), {0}, Tensor::matrix({{1, -1}}));
  const bool hand_ok = std::fabs(hand.combined - 1.3466) <= 1e-3;

  report(3, "loss mixing identities", at1 && at0 && hand_ok,
         fmt("alpha=1 bitwise %s, alpha=0 bitwise %s, mixed case %.6f", at1 ? "yes" : "no",
             at0 ? "yes" : "no", hand.combined));
}

// --------------------------------------------------------------------------
// 4. Complexity separation on n in {128..2048}.
// --------------------------------------------------------------------------
void criterion_complexity() {
  const auto t0 = Clock::now();
  BenchConfig config;
  config.lengths = {128, 256, 512, 1024, 2048};
  config.d_model = 64;
  config.heads = 4;
  config.reps = 5;
  const BenchResult r = run_bench(config);
  const double elapsed = seconds_since(t0);
  const double full_at_max = r.full.mean_seconds.back();
  const double sparse_at_max = r.sparse.mean_seconds.back();
  const bool pass = r.full.slope >= 1.7 && r.sparse.slope <= 1.3 &&
                    sparse_at_max < full_at_max && elapsed < 300.0;
  report(4, "complexity separation", pass,
         fmt("full slope %.2f, sparse slope %.2f, at n=2048 full %.4fs vs sparse %.4fs, "
             "%.1fs",
             r.full.slope, r.sparse.slope, full_at_max, sparse_at_max, elapsed));
}

// --------------------------------------------------------------------------
// 5. Mask structure over 100 random configs.
// --------------------------------------------------------------------------
void criterion_mask_properties() {
  std::mt19937_64 rng(55555);
  bool ok = true;
  std::string why = "all properties held";
  for (int trial = 0; trial < 100 && ok; ++trial) {
    const int n = 1 + static_cast<int>(uniform_below(rng, 256));
    const int g = static_cast<int>(uniform_below(rng, n + 1));
    const int w = static_cast<int>(uniform_below(rng, 8));
    const int rr = static_cast<int>(uniform_below(rng, 6));
    const std::uint64_t seed = rng();
    const AttentionMask m = build_mask(sp(g, w, rr, seed), n);
    const AttentionMask m2 = build_mask(sp(g, w, rr, seed), n);
    if (m.rows != m2.rows) {
      ok = false;
      why = fmt("determinism failed at n=%d g=%d w=%d r=%d", n, g, w, rr);
      break;
    }
    std::int64_t pairs = 0;
    for (int i = 0; i < n; ++i) {
      const auto& row = m.rows[i];
      pairs += static_cast<std::int64_t>(row.size());
      const bool self = std::binary_search(row.begin(), row.end(), i);
      bool globals = true;
      for (int j = 0; j < g; ++j) {
        globals = globals && std::binary_search(row.begin(), row.end(), j);
      }
      const bool row_ok =
          !row.empty() && self && globals &&
          (i < g ? static_cast<int>(row.size()) == n
                 : static_cast<int>(row.size()) <= std::min(n, g + 2 * w + 1 + rr));
      if (!row_ok) {
        ok = false;
        why = fmt("row %d violated structure at n=%d g=%d w=%d r=%d", i, n, g, w, rr);
        break;
      }
    }
    // Linear bound: pairs <= n*(g + 2w + 1 + r) + g*n.
    if (ok && pairs > static_cast<std::int64_t>(n) * (g + 2 * w + 1 + rr + g)) {
      ok = false;
      why = fmt("pair count %lld above the linear bound at n=%d", (long long)pairs, n);
    }
  }
  report(5, "mask properties", ok, why);
}

// --------------------------------------------------------------------------
// 6 + 7. Desk-preset pipeline, then freeze/determinism.
// --------------------------------------------------------------------------
void criterion_pipeline_and_determinism() {
  const auto t0 = Clock::now();
  const RunConfig desk = RunConfig::desk();  // synth_dataset(2000, 7, 0.05)
  const DataSplit split = load_split(desk);
  const Vocabulary vocab = build_vocab(split.train, desk.vocab_max);

  const ModelConfig teacher_cfg = desk.teacher_model();
  const ModelConfig student_cfg = desk.student_model();
  const DistillConfig settings = desk.train_settings();

  auto [teacher, teacher_report] =
      train_teacher(split.train, split.eval, teacher_cfg, settings, vocab);
  const std::uint64_t teacher_before = parameters_fingerprint(teacher);

  auto [student, student_report] = distill_student(
      teacher, teacher_cfg, student_cfg, split.train, split.eval, settings, vocab);
  const std::uint64_t teacher_after = parameters_fingerprint(teacher);

  DistillConfig supervised = settings;
  supervised.alpha = 1.0;
  auto [plain, plain_report] =
      train_teacher(split.train, split.eval, student_cfg, supervised, vocab);

  const double elapsed = seconds_since(t0);
  const double t_acc = teacher_report.final_accuracy;
  const double s_acc = student_report.final_accuracy;
  const double p_acc = plain_report.final_accuracy;
  const bool pass = t_acc >= 0.95 && s_acc >= 0.9 * t_acc && p_acc <= s_acc + 0.02 &&
                    elapsed < 600.0;
  report(6, "pipeline accuracy ordering", pass,
         fmt("teacher %.4f, distilled %.4f, no-teacher %.4f, %.0fs", t_acc, s_acc, p_acc,
             elapsed));

  // Criterion 7: the teacher is untouched by distillation, and reruns with
  // the same seeds reproduce losses and accuracy exactly (smaller shapes so
  // the repeat stays cheap).
  RunConfig small = desk;
  small.synth_count = 200;
  small.d_model = 16;
  small.d_ff = 32;
  small.max_len = 32;
  small.vocab_max = 128;
  small.epochs = 2;
  const DataSplit split2 = load_split(small);
  const Vocabulary vocab2 = build_vocab(split2.train, small.vocab_max);
  auto [t1, r1] = train_teacher(split2.train, split2.eval, small.teacher_model(),
                                small.train_settings(), vocab2);
  auto [t2, r2] = train_teacher(split2.train, split2.eval, small.teacher_model(),
                                small.train_settings(), vocab2);
  bool repro = parameters_fingerprint(t1) == parameters_fingerprint(t2) &&
               r1.final_accuracy == r2.final_accuracy &&
               r1.batch_losses == r2.batch_losses;
  auto [s1, sr1] = distill_student(t1, small.teacher_model(), small.student_model(),
                                   split2.train, split2.eval, small.train_settings(),
                                   vocab2);
  auto [s2, sr2] = distill_student(t1, small.teacher_model(), small.student_model(),
                                   split2.train, split2.eval, small.train_settings(),
                                   vocab2);
  repro = repro && parameters_fingerprint(s1) == parameters_fingerprint(s2) &&
          sr1.batch_losses == sr2.batch_losses &&
          sr1.final_accuracy == sr2.final_accuracy;

  report(7, "teacher freeze and seeded determinism",
         teacher_before == teacher_after && repro,
         fmt("teacher fingerprint %s, reruns %s",
             teacher_before == teacher_after ? "unchanged" : "CHANGED",
             repro ? "identical" : "DIVERGED"));
}

// --------------------------------------------------------------------------
// 8. Parameter accounting.
// --------------------------------------------------------------------------
void criterion_parameter_accounting() {
  ModelConfig hand;
  hand.num_layers = 1;
  hand.num_heads = 1;
  hand.d_model = 4;
  hand.d_ff = 8;
  hand.vocab_size = 10;
  hand.max_len = 8;
  hand.num_classes = 2;
  const bool hand_ok = count_parameters(hand) == 254;

  bool enumeration_ok = true;
  std::mt19937_64 rng(88);
  for (int trial = 0; trial < 10; ++trial) {
    ModelConfig c;
    c.num_layers = 1 + static_cast<int>(uniform_below(rng, 4));
    c.num_heads = 1 + static_cast<int>(uniform_below(rng, 4));
    c.d_model = c.num_heads * (1 + static_cast<int>(uniform_below(rng, 8)));
    c.d_ff = 1 + static_cast<int>(uniform_below(rng, 64));
    c.vocab_size = 4 + static_cast<int>(uniform_below(rng, 100));
    c.max_len = 1 + static_cast<int>(uniform_below(rng, 32));
    c.num_classes = 2 + static_cast<int>(uniform_below(rng, 5));
    const Parameters p = init_params(c, trial);
    std::int64_t total = 0;
    for (const auto& [name, tensor] : named_tensors(p)) {
      total += static_cast<std::int64_t>(tensor->numel());
    }
    enumeration_ok = enumeration_ok && total == count_parameters(c);
  }

  const double ratio = static_cast<double>(count_parameters(full_size_student_config())) /
                       static_cast<double>(count_parameters(full_size_teacher_config()));
  report(8, "parameter accounting", hand_ok && enumeration_ok && ratio <= 0.45,
         fmt("hand sum %lld, enumeration %s, student/teacher ratio %.3f",
             (long long)count_parameters(hand), enumeration_ok ? "matches" : "MISMATCH",
             ratio));
}

}  // namespace

int main() {
  criterion_equivalence();
  criterion_gradients();
  criterion_loss_identities();
  criterion_complexity();
  criterion_mask_properties();
  criterion_pipeline_and_determinism();
  criterion_parameter_accounting();
  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}

// sdbert: train a sparse-attention text classifier, distill it into a
// smaller student, and inspect masks / attention scaling from the shell.
//
// Exit codes: 0 success, 2 config/validation error, 3 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdbert/bench.hpp"
#include "sdbert/checkpoint.hpp"
#include "sdbert/distill.hpp"
#include "sdbert/run_config.hpp"
#include "sdbert/sparse_attention.hpp"

namespace {

namespace fs = std::filesystem;
using namespace sdbert;

fs::path output_dir() {
  const char* env = std::getenv("SDBERT_OUT_DIR");
  fs::path dir = (env != nullptr && *env != '\0') ? fs::path(env) : fs::path(".");
  fs::create_directories(dir);
  return dir;
}

Vocabulary vocab_for(const RunConfig& config, const std::vector<Example>& train) {
  return build_vocab(train, config.vocab_max);
}

int cmd_train_teacher(const std::string& config_path) {
  const RunConfig config = RunConfig::parse_file(config_path);
  const DataSplit split = load_split(config);
  const Vocabulary vocab = vocab_for(config, split.train);

  auto [params, report] = train_teacher(split.train, split.eval, config.teacher_model(),
                                        config.train_settings(), vocab);

  const fs::path dir = output_dir();
  save_checkpoint(dir / "teacher.ckpt", {config.teacher_model(), std::move(params), vocab});
  save_report(dir / "teacher_report.json", report);
  std::cout << "teacher accuracy " << report.final_accuracy << "\n"
            << "checkpoint " << (dir / "teacher.ckpt").string() << "\n"
            << "report " << (dir / "teacher_report.json").string() << "\n";
  return 0;
}

int cmd_distill(const std::string& config_path, const std::string& teacher_path) {
  const RunConfig config = RunConfig::parse_file(config_path);
  Checkpoint teacher = load_checkpoint(teacher_path);

  ModelConfig student_config = teacher.config;
  student_config.num_layers = config.student_layers;
  student_config.num_heads = config.student_heads;
  student_config.validate();
  if (student_config.num_layers > teacher.config.num_layers ||
      student_config.num_heads > teacher.config.num_heads) {
    throw ConfigError("student must be smaller or equal in layers and heads");
  }
  if (config.num_classes != teacher.config.num_classes) {
    throw ConfigError("config num_classes does not match the teacher checkpoint");
  }

  const DataSplit split = load_split(config);
  DistillConfig settings = config.train_settings();
  auto [student, report] =
      distill_student(teacher.params, teacher.config, student_config, split.train,
                      split.eval, settings, teacher.vocab);

  const fs::path dir = output_dir();
  save_checkpoint(dir / "student.ckpt", {student_config, std::move(student), teacher.vocab});
  save_report(dir / "student_report.json", report);
  std::cout << "student accuracy " << report.final_accuracy << "\n"
            << "teacher parameters " << count_parameters(teacher.config) << "\n"
            << "student parameters " << count_parameters(student_config) << "\n"
            << "checkpoint " << (dir / "student.ckpt").string() << "\n"
            << "report " << (dir / "student_report.json").string() << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const std::vector<Example> data = load_tsv(data_path);
  if (data.empty()) throw DataError(data_path + " contains no examples");
  const double acc = evaluate(ckpt.params, ckpt.config, data, ckpt.vocab);
  std::printf("%.4f\n", acc);
  return 0;
}

int cmd_mask_dump(int n, int g, int w, int r, std::uint64_t seed) {
  SparsityConfig config;
  config.global_tokens = g;
  config.window_radius = w;
  config.random_keys = r;
  config.seed = seed;
  std::ostringstream out;
  write_mask(out, build_mask(config, n));
  std::cout << out.str();
  return 0;
}

int cmd_bench(const std::string& lengths_csv, int d_model, int heads, int reps) {
  BenchConfig config;
  config.d_model = d_model;
  config.heads = heads;
  config.reps = reps;
  std::stringstream ss(lengths_csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      config.lengths.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("bad length '" + item + "' in --lengths");
    }
  }
  std::cout << bench_to_json(run_bench(config)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse-attention encoder training, distillation and benchmarks"};
  app.require_subcommand(1);

  std::string config_path, teacher_path, ckpt_path, data_path;
  int n = 8, g = 1, w = 4, r = 2;
  std::uint64_t seed = 1;
  std::string lengths = "128,256,512,1024,2048";
  int d_model = 64, heads = 4, reps = 5;

  auto* train = app.add_subcommand("train-teacher", "train the teacher classifier");
  train->add_option("--config", config_path, "run config (key=value)")->required();

  auto* distill = app.add_subcommand("distill", "distill a trained teacher into a student");
  distill->add_option("--config", config_path, "run config (key=value)")->required();
  distill->add_option("--teacher", teacher_path, "teacher checkpoint")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a TSV dataset");
  eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  eval->add_option("--data", data_path, "label<TAB>text TSV")->required();

  auto* mask = app.add_subcommand("mask-dump", "print the sparse attention mask");
  mask->add_option("--n", n, "sequence length")->required();
  mask->add_option("--g", g, "global tokens");
  mask->add_option("--w", w, "window radius");
  mask->add_option("--r", r, "random keys per row");
  mask->add_option("--seed", seed, "random-key seed");

  auto* bench = app.add_subcommand("bench", "time full vs sparse attention forward");
  bench->add_option("--lengths", lengths, "comma-separated sequence lengths");
  bench->add_option("--d-model", d_model, "model width");
  bench->add_option("--heads", heads, "attention heads");
  bench->add_option("--reps", reps, "timed repetitions per length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return cmd_train_teacher(config_path);
    if (distill->parsed()) return cmd_distill(config_path, teacher_path);
    if (eval->parsed()) return cmd_eval(ckpt_path, data_path);
    if (mask->parsed()) return cmd_mask_dump(n, g, w, r, seed);
    if (bench->parsed()) return cmd_bench(lengths, d_model, heads, reps);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

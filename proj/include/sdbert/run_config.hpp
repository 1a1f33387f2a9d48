#ifndef SDBERT_RUN_CONFIG_HPP_
#define SDBERT_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sdbert/data.hpp"
#include "sdbert/distill.hpp"
#include "sdbert/model.hpp"

namespace sdbert {

// Flat key=value run configuration. Defaults are the `desk` preset: a
// teacher/student pair small enough to train on a laptop in minutes.
// Unknown keys are rejected; any referenced path is validated up front.
struct RunConfig {
  // teacher architecture
  int layers = 2;
  int heads = 4;
  int d_model = 64;
  int d_ff = 256;
  int max_len = 128;
  int num_classes = 2;
  std::string attention = "sparse";  // "full" | "sparse"
  int vocab_max = 2000;
  // sparsity pattern
  int g = 1;
  int w = 4;
  int r = 2;
  std::uint64_t mask_seed = 1;
  // student architecture (widths follow the teacher)
  int student_layers = 1;
  int student_heads = 2;
  // data: TSV paths, or the synthetic task when train_data is empty
  std::string train_data;
  std::string eval_data;
  int synth_count = 2000;
  std::uint64_t synth_seed = 7;
  double synth_noise = 0.05;
  double train_frac = 0.8;
  std::uint64_t split_seed = 11;
  // optimization
  double alpha = 0.5;
  int epochs = 2;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 7;

  static RunConfig desk() { return RunConfig{}; }
  static RunConfig parse_file(const std::filesystem::path& path);
  // Applies one key=value assignment; unknown key or bad value -> ConfigError.
  void assign(const std::string& key, const std::string& value);
  // Range checks plus existence of any referenced data paths.
  void validate() const;

  ModelConfig teacher_model() const;
  ModelConfig student_model() const;
  DistillConfig train_settings() const;
};

// Loads (or synthesizes) the configured dataset and splits it into
// deterministic train/eval parts.
struct DataSplit {
  std::vector<Example> train;
  std::vector<Example> eval;
};
DataSplit load_split(const RunConfig& config);

}  // namespace sdbert

#endif  // SDBERT_RUN_CONFIG_HPP_

#include "sdbert/run_config.hpp"

#include <fstream>
#include <random>

#include "sdbert/rng.hpp"

namespace sdbert {

namespace {

std::string trim(const std::string& s) {
  const std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" +
                      value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

}  // namespace

void RunConfig::assign(const std::string& key, const std::string& value) {
  if (key == "layers") layers = parse_int(key, value);
  else if (key == "heads") heads = parse_int(key, value);
  else if (key == "d_model") d_model = parse_int(key, value);
  else if (key == "d_ff") d_ff = parse_int(key, value);
  else if (key == "max_len") max_len = parse_int(key, value);
  else if (key == "num_classes") num_classes = parse_int(key, value);
  else if (key == "attention") attention = value;
  else if (key == "vocab_max") vocab_max = parse_int(key, value);
  else if (key == "g") g = parse_int(key, value);
  else if (key == "w") w = parse_int(key, value);
  else if (key == "r") r = parse_int(key, value);
  else if (key == "mask_seed") mask_seed = parse_u64(key, value);
  else if (key == "student_layers") student_layers = parse_int(key, value);
  else if (key == "student_heads") student_heads = parse_int(key, value);
  else if (key == "train_data") train_data = value;
  else if (key == "eval_data") eval_data = value;
  else if (key == "synth_count") synth_count = parse_int(key, value);
  else if (key == "synth_seed") synth_seed = parse_u64(key, value);
  else if (key == "synth_noise") synth_noise = parse_double(key, value);
  else if (key == "train_frac") train_frac = parse_double(key, value);
  else if (key == "split_seed") split_seed = parse_u64(key, value);
  else if (key == "alpha") alpha = parse_double(key, value);
  else if (key == "epochs") epochs = parse_int(key, value);
  else if (key == "batch_size") batch_size = parse_int(key, value);
  else if (key == "learning_rate") learning_rate = parse_double(key, value);
  else if (key == "adam_beta1") adam_beta1 = parse_double(key, value);
  else if (key == "adam_beta2") adam_beta2 = parse_double(key, value);
  else if (key == "adam_eps") adam_eps = parse_double(key, value);
  else if (key == "seed") seed = parse_u64(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig RunConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  RunConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ": line " + std::to_string(line_no) +
                        ": expected key=value");
    }
    config.assign(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  config.validate();
  return config;
}

void RunConfig::validate() const {
  teacher_model().validate();
  student_model().validate();
  train_settings().validate();
  if (attention != "full" && attention != "sparse") {
    throw ConfigError("attention must be 'full' or 'sparse', got '" + attention + "'");
  }
  if (vocab_max < 4) throw ConfigError("vocab_max must be at least 4");
  if (student_layers > layers || student_heads > heads) {
    throw ConfigError("student must be smaller or equal in layers and heads");
  }
  if (train_frac <= 0.0 || train_frac >= 1.0) {
    throw ConfigError("train_frac must be in (0, 1)");
  }
  if (train_data.empty()) {
    if (synth_count < 2) throw ConfigError("synth_count must be at least 2");
    if (synth_noise < 0.0 || synth_noise >= 0.5) {
      throw ConfigError("synth_noise must be in [0, 0.5)");
    }
  } else if (!std::filesystem::exists(train_data)) {
    throw ConfigError("train_data path does not exist: " + train_data);
  }
  if (!eval_data.empty() && !std::filesystem::exists(eval_data)) {
    throw ConfigError("eval_data path does not exist: " + eval_data);
  }
}

ModelConfig RunConfig::teacher_model() const {
  ModelConfig m;
  m.num_layers = layers;
  m.num_heads = heads;
  m.d_model = d_model;
  m.d_ff = d_ff;
  m.vocab_size = vocab_max;
  m.max_len = max_len;
  m.num_classes = num_classes;
  m.attention_mode = attention == "full" ? AttentionMode::kFull : AttentionMode::kSparse;
  m.sparsity.global_tokens = g;
  m.sparsity.window_radius = w;
  m.sparsity.random_keys = r;
  m.sparsity.seed = mask_seed;
  return m;
}

ModelConfig RunConfig::student_model() const {
  ModelConfig m = teacher_model();
  m.num_layers = student_layers;
  m.num_heads = student_heads;
  return m;
}

DistillConfig RunConfig::train_settings() const {
  DistillConfig c;
  c.alpha = alpha;
  c.epochs = epochs;
  c.batch_size = batch_size;
  c.learning_rate = learning_rate;
  c.adam_beta1 = adam_beta1;
  c.adam_beta2 = adam_beta2;
  c.adam_eps = adam_eps;
  c.seed = seed;
  return c;
}

DataSplit load_split(const RunConfig& config) {
  config.validate();
  std::vector<Example> all;
  if (!config.train_data.empty() && !config.eval_data.empty()) {
    DataSplit split;
    split.train = load_tsv(config.train_data);
    split.eval = load_tsv(config.eval_data);
    if (split.train.empty() || split.eval.empty()) {
      throw DataError("configured dataset is empty");
    }
    return split;
  }
  if (!config.train_data.empty()) {
    all = load_tsv(config.train_data);
  } else {
    all = synth_dataset(config.synth_count, config.synth_seed, config.synth_noise);
  }
  if (all.size() < 2) throw DataError("dataset too small to split");

  std::vector<int> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::mt19937_64 rng(config.split_seed);
  shuffle(order, rng);
  std::size_t train_count =
      static_cast<std::size_t>(config.train_frac * static_cast<double>(all.size()));
  train_count = std::min(std::max<std::size_t>(train_count, 1), all.size() - 1);

  DataSplit split;
  for (std::size_t i = 0; i < all.size(); ++i) {
    (i < train_count ? split.train : split.eval).push_back(all[order[i]]);
  }
  return split;
}

}  // namespace sdbert

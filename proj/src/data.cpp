#include "sdbert/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "sdbert/rng.hpp"

namespace sdbert {

namespace {

const std::vector<std::string> kReserved = {"<pad>", "<unk>", "<cls>"};

std::string trimmed(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(kReserved) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kReserved.size()) {
    throw DataError("vocabulary is missing its reserved entries");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw DataError("vocabulary token '" + tokens_[i] + "' appears twice");
    }
  }
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (unsigned char c : text) {
    if (c < 0x80 && !std::isalnum(c)) {
      if (!current.empty()) {
        out.push_back(current);
        current.clear();
      }
      continue;
    }
    current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c))
                               : static_cast<char>(c));
  }
  if (!current.empty()) out.push_back(current);
  return out;
}

std::vector<Example> load_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Example> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                       ": expected label<TAB>text");
    }
    const std::string label_str = line.substr(0, tab);
    if (label_str != "0" && label_str != "1") {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                       ": label must be 0 or 1, got '" + label_str + "'");
    }
    std::string text = line.substr(tab + 1);
    if (trimmed(text).empty()) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                       ": empty text");
    }
    out.push_back({std::move(text), label_str == "1" ? 1 : 0});
  }
  if (in.bad()) throw DataError("error reading " + path.string());
  return out;
}

void save_tsv(const std::filesystem::path& path, const std::vector<Example>& examples) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw DataError("cannot write " + path.string());
  for (const Example& e : examples) {
    outf << e.label << '\t' << e.text << '\n';
  }
  if (!outf) throw DataError("error writing " + path.string());
}

void save_vocab(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw DataError("cannot write " + path.string());
  for (const std::string& t : vocab.tokens()) outf << t << '\n';
  if (!outf) throw DataError("error writing " + path.string());
}

Vocabulary load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(const std::vector<Example>& examples, int max_size) {
  if (max_size < static_cast<int>(kReserved.size()) + 1) {
    throw ConfigError("vocabulary max_size must be at least 4");
  }
  std::map<std::string, std::int64_t> counts;  // ordered map: lexicographic ties
  for (const Example& e : examples) {
    for (const std::string& t : tokenize(e.text)) ++counts[t];
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = kReserved;
  for (const auto& [token, count] : ranked) {
    if (static_cast<int>(tokens.size()) >= max_size) break;
    tokens.push_back(token);
  }
  return Vocabulary(std::move(tokens));
}

void encode(const Vocabulary& vocab, const std::string& text, int n,
            std::vector<int>& ids_out, std::vector<std::uint8_t>& mask_out) {
  if (n < 2) throw ConfigError("encode length must be at least 2");
  ids_out.assign(static_cast<std::size_t>(n), Vocabulary::kPad);
  mask_out.assign(static_cast<std::size_t>(n), 0);
  ids_out[0] = Vocabulary::kCls;
  mask_out[0] = 1;
  int pos = 1;
  for (const std::string& t : tokenize(text)) {
    if (pos >= n) break;
    ids_out[pos] = vocab.id_of(t);
    mask_out[pos] = 1;
    ++pos;
  }
}

namespace {

const std::vector<std::string> kPositive = {
    "great",   "excellent", "wonderful", "superb",      "delightful",
    "masterful", "charming", "brilliant", "captivating", "moving"};

const std::vector<std::string> kNegative = {
    "awful",    "terrible", "dreadful", "boring",  "clumsy",
    "tedious",  "lifeless", "grating",  "shallow", "disjointed"};

const std::vector<std::string> kFiller = {
    "the",      "movie",    "film",     "plot",     "actor",   "scene",
    "camera",   "story",    "screen",   "director", "dialogue", "music",
    "sound",    "runtime",  "cast",     "character", "ending",  "beginning",
    "sequel",   "genre",    "editing",  "pacing",   "set",      "costume",
    "lighting", "script",   "theater",  "audience", "review",   "critic",
    "release",  "studio",   "budget",   "trailer",  "premiere", "role",
    "performance", "shot",  "frame",    "montage"};

}  // namespace

const std::vector<std::string>& positive_lexicon() { return kPositive; }
const std::vector<std::string>& negative_lexicon() { return kNegative; }

std::vector<Example> synth_dataset(int count, std::uint64_t seed, double noise) {
  if (count < 2) throw ConfigError("synth_dataset needs count >= 2");
  if (noise < 0.0 || noise >= 0.5) throw ConfigError("noise must be in [0, 0.5)");

  std::vector<Example> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const int label = i % 2;
    const int length = 8 + static_cast<int>(uniform_below(rng, 25));  // 8..32
    std::vector<std::string> words(length);
    for (auto& w : words) w = kFiller[uniform_below(rng, kFiller.size())];

    const auto& lexicon = label == 1 ? kPositive : kNegative;
    const int signal_words = 2 + static_cast<int>(uniform_below(rng, 2));  // 2..3
    // Distinct positions for the sentiment words.
    std::vector<int> positions(length);
    for (int p = 0; p < length; ++p) positions[p] = p;
    shuffle(positions, rng);
    for (int s = 0; s < signal_words; ++s) {
      words[positions[s]] = lexicon[uniform_below(rng, lexicon.size())];
    }

    std::string text;
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (w) text += ' ';
      text += words[w];
    }
    out.push_back({std::move(text), label});
  }

  // Flip exactly floor(noise * count) labels; the base examples are
  // independent of the noise setting.
  const int flips = static_cast<int>(noise * count);
  if (flips > 0) {
    std::vector<int> order(count);
    for (int i = 0; i < count; ++i) order[i] = i;
    std::mt19937_64 rng(mix_seed(seed, 0x666c6970ULL));  // distinct flip stream
    shuffle(order, rng);
    for (int f = 0; f < flips; ++f) out[order[f]].label ^= 1;
  }
  return out;
}

std::vector<EncodedBatch> batch_iter(const std::vector<Example>& examples,
                                     const Vocabulary& vocab, int n, int batch_size,
                                     std::uint64_t shuffle_seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  std::vector<int> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::mt19937_64 rng(shuffle_seed);
  shuffle(order, rng);

  std::vector<EncodedBatch> batches;
  std::vector<int> ids;
  std::vector<std::uint8_t> mask;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    EncodedBatch b;
    b.batch = static_cast<int>(end - start);
    b.seq_len = n;
    b.token_ids.reserve(b.batch * static_cast<std::size_t>(n));
    b.real.reserve(b.batch * static_cast<std::size_t>(n));
    for (std::size_t t = start; t < end; ++t) {
      const Example& e = examples[order[t]];
      encode(vocab, e.text, n, ids, mask);
      b.token_ids.insert(b.token_ids.end(), ids.begin(), ids.end());
      b.real.insert(b.real.end(), mask.begin(), mask.end());
      b.labels.push_back(e.label);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace sdbert

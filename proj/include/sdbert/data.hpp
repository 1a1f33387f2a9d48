#ifndef SDBERT_DATA_HPP_
#define SDBERT_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "sdbert/errors.hpp"

namespace sdbert {

struct Example {
  std::string text;
  int label = 0;
};

// Token list with reserved entries at fixed indices; index == position in
// `tokens`.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  // kUnk for tokens not in the vocabulary.
  int id_of(const std::string& token) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct EncodedBatch {
  int batch = 0;
  int seq_len = 0;
  std::vector<int> token_ids;        // [batch x seq_len], row-major
  std::vector<std::uint8_t> real;    // true on non-padding positions
  std::vector<int> labels;           // [batch]
};

// Lowercased split on any non-alphanumeric ASCII byte (bytes >= 0x80 are
// kept, so multi-byte UTF-8 sequences survive as token characters).
std::vector<std::string> tokenize(const std::string& text);

// `label<TAB>text` per line, UTF-8, no header. Empty lines are skipped;
// anything else malformed raises ParseError naming the 1-based line.
std::vector<Example> load_tsv(const std::filesystem::path& path);
void save_tsv(const std::filesystem::path& path, const std::vector<Example>& examples);

// One token per line, line number == index.
void save_vocab(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary load_vocab(const std::filesystem::path& path);

// Tokens ranked by frequency (ties broken lexicographically), truncated to
// max_size including the 3 reserved entries. Deterministic.
Vocabulary build_vocab(const std::vector<Example>& examples, int max_size);

// [cls] + token ids (unknown -> kUnk), truncated to n, right-padded with
// kPad; mask true on real positions. Output is always exactly n long.
void encode(const Vocabulary& vocab, const std::string& text, int n,
            std::vector<int>& ids_out, std::vector<std::uint8_t>& mask_out);

// Deterministic synthetic sentiment task: filler-word sequences of length
// 8..32 where label-1 examples embed >= 2 positive-lexicon words and label-0
// examples >= 2 negative-lexicon words; floor(noise * count) labels are then
// flipped. Classes are balanced before flipping.
std::vector<Example> synth_dataset(int count, std::uint64_t seed, double noise);

// The lexicons synth_dataset draws from, exposed for oracle-style checks.
const std::vector<std::string>& positive_lexicon();
const std::vector<std::string>& negative_lexicon();

// Seeded shuffle, then fixed-size batches in order; the final partial batch
// is kept. Every row is encoded to length n.
std::vector<EncodedBatch> batch_iter(const std::vector<Example>& examples,
                                     const Vocabulary& vocab, int n, int batch_size,
                                     std::uint64_t shuffle_seed);

}  // namespace sdbert

#endif  // SDBERT_DATA_HPP_

#include "sdbert/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace sdbert {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'B', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

void write_i32(std::ostream& os, std::int32_t v) {
  write_u32(os, static_cast<std::uint32_t>(v));
}

void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_doubles(std::ostream& os, const std::vector<double>& v) {
  for (double d : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    write_u64(os, bits);
  }
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  if (!is) throw DataError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

std::int32_t read_i32(std::istream& is) { return static_cast<std::int32_t>(read_u32(is)); }

std::string read_string(std::istream& is) {
  const std::uint32_t len = read_u32(is);
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) throw DataError("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kVersion);

  const ModelConfig& c = ckpt.config;
  write_i32(os, c.num_layers);
  write_i32(os, c.num_heads);
  write_i32(os, c.d_model);
  write_i32(os, c.d_ff);
  write_i32(os, c.vocab_size);
  write_i32(os, c.max_len);
  write_i32(os, c.num_classes);
  write_u32(os, c.attention_mode == AttentionMode::kSparse ? 1u : 0u);
  write_i32(os, c.sparsity.global_tokens);
  write_i32(os, c.sparsity.window_radius);
  write_i32(os, c.sparsity.random_keys);
  write_u64(os, c.sparsity.seed);

  const auto& tokens = ckpt.vocab.tokens();
  write_u32(os, static_cast<std::uint32_t>(tokens.size()));
  for (const std::string& t : tokens) write_string(os, t);

  const auto named = named_tensors(ckpt.params);
  write_u32(os, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, tensor] : named) {
    write_string(os, name);
    write_u32(os, static_cast<std::uint32_t>(tensor->shape.size()));
    for (int e : tensor->shape) write_i32(os, e);
    write_doubles(os, tensor->values);
  }
  if (!os) throw DataError("error writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + " is not a checkpoint file");
  }
  if (read_u32(is) != kVersion) throw DataError("unsupported checkpoint version");

  Checkpoint ckpt;
  ModelConfig& c = ckpt.config;
  c.num_layers = read_i32(is);
  c.num_heads = read_i32(is);
  c.d_model = read_i32(is);
  c.d_ff = read_i32(is);
  c.vocab_size = read_i32(is);
  c.max_len = read_i32(is);
  c.num_classes = read_i32(is);
  c.attention_mode = read_u32(is) == 1u ? AttentionMode::kSparse : AttentionMode::kFull;
  c.sparsity.global_tokens = read_i32(is);
  c.sparsity.window_radius = read_i32(is);
  c.sparsity.random_keys = read_i32(is);
  c.sparsity.seed = read_u64(is);
  c.validate();

  const std::uint32_t token_count = read_u32(is);
  std::vector<std::string> tokens;
  tokens.reserve(token_count);
  for (std::uint32_t i = 0; i < token_count; ++i) tokens.push_back(read_string(is));
  ckpt.vocab = Vocabulary(std::move(tokens));

  // Allocate the expected layout, then fill tensors by name so the file is
  // self-describing rather than order-dependent.
  ckpt.params = init_params(c, 0);
  auto named = named_tensors(ckpt.params);
  const std::uint32_t tensor_count = read_u32(is);
  if (tensor_count != named.size()) {
    throw DataError("checkpoint tensor count does not match architecture");
  }
  for (std::uint32_t t = 0; t < tensor_count; ++t) {
    const std::string name = read_string(is);
    Tensor* target = nullptr;
    for (auto& [n, ptr] : named) {
      if (n == name) {
        target = ptr;
        break;
      }
    }
    if (target == nullptr) throw DataError("checkpoint has unknown tensor '" + name + "'");
    const std::uint32_t rank = read_u32(is);
    std::vector<int> shape(rank);
    for (auto& e : shape) e = read_i32(is);
    if (shape != target->shape) {
      throw DataError("checkpoint tensor '" + name + "' has unexpected shape");
    }
    for (double& v : target->values) {
      std::uint64_t bits = read_u64(is);
      std::memcpy(&v, &bits, sizeof(v));
    }
  }
  return ckpt;
}

}  // namespace sdbert

#ifndef SDBERT_CHECKPOINT_HPP_
#define SDBERT_CHECKPOINT_HPP_

#include <filesystem>

#include "sdbert/data.hpp"
#include "sdbert/model.hpp"

namespace sdbert {

// Everything needed to run a saved classifier: architecture, weights, and
// the vocabulary its token ids refer to.
struct Checkpoint {
  ModelConfig config;
  Parameters params;
  Vocabulary vocab;
};

// Binary container, little-endian, documented in README.md:
//   magic "SDBCKPT1", u32 version,
//   config fields, vocabulary (count + length-prefixed tokens),
//   tensor count, then per tensor: length-prefixed name, rank, extents,
//   raw float64 values. Round-trips losslessly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sdbert

#endif  // SDBERT_CHECKPOINT_HPP_

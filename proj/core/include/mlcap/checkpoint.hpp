#pragma once

// Binary checkpoint layout:
//   "MLCAP1" | u64 little-endian header length | JSON header |
//   float64 little-endian arrays concatenated in header order.
// The header carries format version, dims, vocabulary, array names and
// shapes, the training-config snapshot and the epoch index.

#include <filesystem>
#include <string>
#include <string_view>

#include "mlcap/model.hpp"
#include "mlcap/vocab.hpp"

namespace mlcap {

struct Checkpoint {
  static constexpr int kVersion = 1;

  int version = kVersion;
  ModelParams params;
  Vocabulary vocab;
  std::string config_json = "{}";  // JSON object text
  std::size_t epoch = 0;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
// Throws DataError on bad magic, version mismatch, truncation, trailing
// bytes, or headers whose shapes disagree with the dims.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mlcap

#pragma once

// Line-delimited JSON dataset, one image per line:
//   {"image_id": "...", "feature": [floats], "captions": [{"lang": "en",
//    "tokens": ["a", "red", "circle"]}]}

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mlcap {

struct Caption {
  std::string language;
  std::vector<std::string> tokens;

  friend bool operator==(const Caption&, const Caption&) = default;
};

struct ImageRecord {
  std::string image_id;
  std::vector<double> feature;
  std::vector<Caption> captions;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct LoadOptions {
  // Feature-only files (inputs to captioning) may omit captions.
  bool require_captions = true;
};

// Throws DataError naming the source and line on parse failures, ragged
// feature sizes, duplicate ids, or missing captions.
std::vector<ImageRecord> parse_dataset(std::istream& in, LoadOptions options = {},
                                       std::string_view source = "<stream>");
std::vector<ImageRecord> load_dataset(const std::filesystem::path& path,
                                      LoadOptions options = {});

void write_dataset(std::ostream& out, std::span<const ImageRecord> records);
void save_dataset(const std::filesystem::path& path,
                  std::span<const ImageRecord> records);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;

  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

// Validation and test each get floor(n * 2000 / 26500) images, training the
// rest; 26500 records give 22500 / 2000 / 2000.
SplitCounts proportional_split(std::size_t records);

struct DatasetSplit {
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> val;
  std::vector<ImageRecord> test;
};

// Seeded shuffle of whole images, then consecutive partition.
DatasetSplit split_dataset(std::span<const ImageRecord> records,
                           const SplitCounts& counts, std::uint64_t seed);

// Scales every feature vector to unit Euclidean norm (zero vectors untouched).
void l2_normalize_features(std::span<ImageRecord> records);

// Best-effort import of MSCOCO-style caption annotations
// ({"images": [{"id", ...}], "annotations": [{"image_id", "caption"}]}).
// Features come from a JSONL file of {"image_id", "feature"} objects; images
// without a feature are skipped. Captions are split on whitespace.
std::vector<ImageRecord> import_coco(const std::filesystem::path& annotations,
                                     const std::filesystem::path& features,
                                     std::string_view language, bool lowercase);

}  // namespace mlcap

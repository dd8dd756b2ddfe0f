#include "mlcap/dataset.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "mlcap/errors.hpp"
#include "mlcap/random.hpp"
#include "mlcap/vocab.hpp"

namespace mlcap {
namespace {

using nlohmann::json;

[[noreturn]] void fail(std::string_view source, std::size_t line,
                       const std::string& what) {
  throw DataError(std::string(source) + ":" + std::to_string(line) + ": " + what);
}

std::optional<std::string> id_string(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<long long>());
  return std::nullopt;
}

ImageRecord parse_record(const json& obj, std::string_view source,
                         std::size_t line, const LoadOptions& options) {
  if (!obj.is_object()) fail(source, line, "expected a JSON object");
  ImageRecord rec;
  try {
    if (!obj.contains("image_id")) fail(source, line, "missing \"image_id\"");
    const auto id = id_string(obj.at("image_id"));
    if (!id || id->empty()) fail(source, line, "image_id must be a non-empty string or integer");
    rec.image_id = *id;

    const json& feature = obj.at("feature");
    if (!feature.is_array() || feature.empty()) {
      fail(source, line, "image " + rec.image_id + ": \"feature\" must be a non-empty array");
    }
    for (const json& x : feature) {
      if (!x.is_number()) fail(source, line, "image " + rec.image_id + ": non-numeric feature value");
      const double v = x.get<double>();
      if (!std::isfinite(v)) fail(source, line, "image " + rec.image_id + ": non-finite feature value");
      rec.feature.push_back(v);
    }

    if (obj.contains("captions")) {
      const json& captions = obj.at("captions");
      if (!captions.is_array()) fail(source, line, "image " + rec.image_id + ": \"captions\" must be an array");
      for (const json& c : captions) {
        Caption cap;
        cap.language = c.at("lang").get<std::string>();
        if (cap.language.empty()) fail(source, line, "image " + rec.image_id + ": empty language code");
        for (const json& tok : c.at("tokens")) {
          auto text = tok.get<std::string>();
          if (text.empty() || text.find_first_of(" \t\r\n") != std::string::npos) {
            fail(source, line, "image " + rec.image_id + ": tokens must be non-empty and whitespace-free");
          }
          cap.tokens.push_back(std::move(text));
        }
        rec.captions.push_back(std::move(cap));
      }
    }
  } catch (const json::exception& e) {
    fail(source, line, std::string("malformed record: ") + e.what());
  }
  if (options.require_captions && rec.captions.empty()) {
    fail(source, line, "image " + rec.image_id + " has no captions");
  }
  return rec;
}

std::string coco_id(const json& value) {
  auto id = id_string(value);
  if (!id) throw DataError("annotation image id must be a string or integer");
  return *id;
}

}  // namespace

std::vector<ImageRecord> parse_dataset(std::istream& in, LoadOptions options,
                                       std::string_view source) {
  std::vector<ImageRecord> records;
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::exception& e) {
      fail(source, line, std::string("JSON parse error: ") + e.what());
    }
    ImageRecord rec = parse_record(obj, source, line, options);
    if (!records.empty() && rec.feature.size() != records.front().feature.size()) {
      fail(source, line, "image " + rec.image_id + " has feature length " +
                             std::to_string(rec.feature.size()) + ", expected " +
                             std::to_string(records.front().feature.size()));
    }
    if (!seen.insert(rec.image_id).second) {
      fail(source, line, "duplicate image_id " + rec.image_id);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ImageRecord> load_dataset(const std::filesystem::path& path,
                                      LoadOptions options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return parse_dataset(in, options, path.string());
}

void write_dataset(std::ostream& out, std::span<const ImageRecord> records) {
  for (const auto& rec : records) {
    json obj;
    obj["image_id"] = rec.image_id;
    obj["feature"] = rec.feature;
    json captions = json::array();
    for (const auto& cap : rec.captions) {
      captions.push_back({{"lang", cap.language}, {"tokens", cap.tokens}});
    }
    obj["captions"] = std::move(captions);
    out << obj.dump() << '\n';
  }
}

void save_dataset(const std::filesystem::path& path,
                  std::span<const ImageRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset " + path.string());
  write_dataset(out, records);
  if (!out) throw DataError("failed writing dataset " + path.string());
}

SplitCounts proportional_split(std::size_t records) {
  SplitCounts counts;
  counts.val = records * 2000 / 26500;
  counts.test = counts.val;
  counts.train = records - counts.val - counts.test;
  return counts;
}

DatasetSplit split_dataset(std::span<const ImageRecord> records,
                           const SplitCounts& counts, std::uint64_t seed) {
  const std::size_t needed = counts.train + counts.val + counts.test;
  if (needed > records.size()) {
    throw ContractError("split needs " + std::to_string(needed) +
                        " images but only " + std::to_string(records.size()) +
                        " are available");
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::substream(seed, "split");
  rng.shuffle(std::span(order));

  DatasetSplit split;
  std::size_t next = 0;
  auto take = [&](std::vector<ImageRecord>& dst, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst.push_back(records[order[next++]]);
  };
  take(split.train, counts.train);
  take(split.val, counts.val);
  take(split.test, counts.test);
  return split;
}

void l2_normalize_features(std::span<ImageRecord> records) {
  for (auto& rec : records) {
    double norm = 0.0;
    for (double x : rec.feature) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (double& x : rec.feature) x /= norm;
  }
}

std::vector<ImageRecord> import_coco(const std::filesystem::path& annotations,
                                     const std::filesystem::path& features,
                                     std::string_view language, bool lower) {
  std::ifstream ann_in(annotations);
  if (!ann_in) throw DataError("cannot open annotations " + annotations.string());
  json ann;
  try {
    ann = json::parse(ann_in);
  } catch (const json::exception& e) {
    throw DataError(annotations.string() + ": JSON parse error: " + e.what());
  }

  const auto feature_records = load_dataset(features, {.require_captions = false});
  std::unordered_map<std::string, std::size_t> feature_index;
  for (std::size_t i = 0; i < feature_records.size(); ++i) {
    feature_index.emplace(feature_records[i].image_id, i);
  }

  // Image order follows the annotation file's "images" list when present.
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<std::string>>> captions;
  try {
    if (ann.contains("images")) {
      for (const json& img : ann.at("images")) order.push_back(coco_id(img.at("id")));
    }
    for (const json& a : ann.at("annotations")) {
      const std::string id = coco_id(a.at("image_id"));
      auto tokens = split_whitespace(a.at("caption").get<std::string>());
      if (lower) tokens = lowercase(tokens);
      if (tokens.empty()) continue;
      if (!ann.contains("images") && !captions.contains(id)) order.push_back(id);
      captions[id].push_back(std::move(tokens));
    }
  } catch (const json::exception& e) {
    throw DataError(annotations.string() + ": malformed annotations: " + e.what());
  }

  std::vector<ImageRecord> out;
  std::set<std::string> emitted;
  for (const auto& id : order) {
    const auto f = feature_index.find(id);
    const auto c = captions.find(id);
    if (f == feature_index.end() || c == captions.end()) continue;
    if (!emitted.insert(id).second) continue;
    ImageRecord rec;
    rec.image_id = id;
    rec.feature = feature_records[f->second].feature;
    for (auto& tokens : c->second) rec.captions.push_back({std::string(language), tokens});
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace mlcap

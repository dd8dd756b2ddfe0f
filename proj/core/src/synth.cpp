#include "mlcap/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>

#include "mlcap/errors.hpp"
#include "mlcap/random.hpp"

namespace mlcap {
namespace {

constexpr std::array<const char*, kSynthColors> kEnColors = {"red", "green", "blue", "yellow"};
constexpr std::array<const char*, kSynthShapes> kEnShapes = {"circle", "square", "triangle", "star"};
constexpr std::array<const char*, kSynthColors> kJpColors = {"aka", "midori", "ao", "kiiro"};
constexpr std::array<const char*, kSynthShapes> kJpShapes = {"maru", "shikaku", "sankaku", "hoshi"};

std::string tagged(std::string_view word, std::string_view language) {
  return std::string(word) + "." + std::string(language);
}

}  // namespace

std::vector<std::string> synth_caption(std::string_view language, SynthAttributes attrs) {
  if (attrs.color < 0 || attrs.color >= kSynthColors || attrs.shape < 0 ||
      attrs.shape >= kSynthShapes) {
    throw ContractError("synthetic attributes out of range");
  }
  if (language.empty()) throw ContractError("language code must be non-empty");
  if (language == "en") return {"a", kEnColors[attrs.color], kEnShapes[attrs.shape]};
  if (language == "jp") return {kJpShapes[attrs.shape], kJpColors[attrs.color], "desu"};
  return {tagged("the", language), tagged(kEnColors[attrs.color], language),
          tagged(kEnShapes[attrs.shape], language)};
}

std::optional<SynthAttributes> synth_parse(std::string_view language,
                                           std::span<const std::string> tokens) {
  for (int c = 0; c < kSynthColors; ++c) {
    for (int s = 0; s < kSynthShapes; ++s) {
      const auto caption = synth_caption(language, {c, s});
      if (std::equal(caption.begin(), caption.end(), tokens.begin(), tokens.end())) {
        return SynthAttributes{c, s};
      }
    }
  }
  return std::nullopt;
}

std::vector<std::string> synth_lexicon(std::string_view language) {
  std::set<std::string> words;
  for (int c = 0; c < kSynthColors; ++c) {
    for (int s = 0; s < kSynthShapes; ++s) {
      for (auto& tok : synth_caption(language, {c, s})) words.insert(std::move(tok));
    }
  }
  return {words.begin(), words.end()};
}

std::vector<ImageRecord> synth_generate(std::size_t images, std::uint64_t seed,
                                        std::span<const std::string> languages) {
  if (images == 0) throw ContractError("synth_generate: need at least one image");
  if (languages.empty()) throw ContractError("synth_generate: need at least one language");
  std::set<std::string> unique(languages.begin(), languages.end());
  if (unique.size() != languages.size()) {
    throw ContractError("synth_generate: duplicate language codes");
  }

  Rng rng = Rng::substream(seed, "synth");
  std::vector<ImageRecord> records;
  records.reserve(images);
  for (std::size_t i = 0; i < images; ++i) {
    SynthAttributes attrs;
    attrs.color = static_cast<int>(rng.uniform_index(kSynthColors));
    attrs.shape = static_cast<int>(rng.uniform_index(kSynthShapes));

    ImageRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%06zu", i);
    rec.image_id = id;
    rec.feature.resize(kSynthFeatureDim);
    for (double& x : rec.feature) x = rng.uniform(-kSynthNoise, kSynthNoise);
    rec.feature[static_cast<std::size_t>(attrs.color * kSynthShapes + attrs.shape)] += 1.0;
    for (const auto& lang : languages) {
      rec.captions.push_back({lang, synth_caption(lang, attrs)});
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace mlcap

#pragma once

// Synthetic bilingual captioning data. Each image has a (color, shape)
// attribute pair, encoded as a one-hot vector over the 16 pairs plus uniform
// noise of amplitude 0.05. Captions come from per-language templates with
// disjoint surface vocabularies:
//   en:    a <color> <shape>          ("a red circle")
//   jp:    <shape> <color> desu       ("maru aka desu")
//   other: the.<code> <color>.<code> <shape>.<code>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlcap/dataset.hpp"

namespace mlcap {

inline constexpr int kSynthColors = 4;
inline constexpr int kSynthShapes = 4;
inline constexpr std::size_t kSynthFeatureDim = kSynthColors * kSynthShapes;
inline constexpr double kSynthNoise = 0.05;

struct SynthAttributes {
  int color = 0;
  int shape = 0;

  friend bool operator==(const SynthAttributes&, const SynthAttributes&) = default;
};

std::vector<std::string> synth_caption(std::string_view language, SynthAttributes attrs);
// Inverse of synth_caption; nullopt when the tokens are not a template caption.
std::optional<SynthAttributes> synth_parse(std::string_view language,
                                           std::span<const std::string> tokens);
// Every surface token the language's template can produce.
std::vector<std::string> synth_lexicon(std::string_view language);

// Image ids are "synth-000000", ...; attributes and noise come from the seed's
// "synth" stream.
std::vector<ImageRecord> synth_generate(std::size_t images, std::uint64_t seed,
                                        std::span<const std::string> languages);

}  // namespace mlcap

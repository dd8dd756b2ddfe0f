#pragma once

// Caption generation conditioned on an image feature and a language start
// token. The decoder first feeds the feature, then the start token, then each
// emitted word. <pad> and language start tokens are never emitted.

#include <cstddef>
#include <span>
#include <vector>

#include "mlcap/model.hpp"
#include "mlcap/vocab.hpp"

namespace mlcap {

struct BeamConfig {
  std::size_t width = 5;
  std::size_t max_len = 30;  // emitted tokens, <eos> included
  // Rank the final pool by log_prob / length instead of raw log_prob.
  bool length_norm = false;
};

struct Hypothesis {
  std::vector<TokenId> ids;  // emitted tokens; at most one <eos>, terminal
  double log_prob = 0.0;
  LstmState state;  // state before consuming ids.back() (or the start token)
  bool finished = false;
};

struct ScoredCaption {
  std::vector<TokenId> ids;  // ends with <eos> unless truncated at max_len
  double log_prob = 0.0;

  friend bool operator==(const ScoredCaption&, const ScoredCaption&) = default;
};

// Total ranking order: higher log_prob first; equal scores go to the
// lexicographically smaller id sequence, so lower token ids win and a prefix
// precedes its extensions.
bool ranks_before(const ScoredCaption& a, const ScoredCaption& b);

// Each step expands every live hypothesis over the vocabulary and keeps the
// best `width` candidates. Candidates ending in <eos> or reaching max_len move
// to the finished pool; the rest continue. Returns up to `width` finished
// captions, best first. Throws ContractError for width or max_len of 0.
std::vector<ScoredCaption> beam_search(std::span<const double> feature,
                                       TokenId start_id,
                                       const ModelParams& params,
                                       const Vocabulary& vocab,
                                       const BeamConfig& config);

// Argmax token at every step (lower id on ties) until <eos> or max_len.
ScoredCaption greedy_decode(std::span<const double> feature, TokenId start_id,
                            const ModelParams& params, const Vocabulary& vocab,
                            std::size_t max_len);

// Exact best sequence by enumerating every emission sequence of length
// <= max_len. Throws ContractError beyond kMaxEnumerated sequences.
inline constexpr double kMaxEnumerated = 1e6;
ScoredCaption exhaustive_decode(std::span<const double> feature,
                                TokenId start_id, const ModelParams& params,
                                const Vocabulary& vocab, std::size_t max_len);

// Number of sequences exhaustive_decode visits with `emittable` tokens.
double enumeration_size(std::size_t emittable, std::size_t max_len);

}  // namespace mlcap

#include "mlcap/beam.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mlcap/errors.hpp"

namespace mlcap {
namespace {

void check_inputs(const ModelParams& params, const Vocabulary& vocab, TokenId start_id) {
  if (vocab.size() != params.dims.vocab) {
    throw DimensionError("vocabulary has " + std::to_string(vocab.size()) +
                         " tokens but the model has " + std::to_string(params.dims.vocab));
  }
  if (!vocab.is_start(start_id)) {
    throw ContractError("token id " + std::to_string(start_id) +
                        " is not a language start token");
  }
}

bool emittable(const Vocabulary& vocab, TokenId id) {
  return id != Vocabulary::kPad && !vocab.is_start(id);
}

// State after the feature step, ready to consume the start token.
LstmState primed_state(std::span<const double> feature, const ModelParams& params) {
  return step_distribution(initial_state(params), feature, params).state;
}

TokenId last_input(const std::vector<TokenId>& ids, TokenId start_id) {
  return ids.empty() ? start_id : ids.back();
}

struct Candidate {
  std::size_t parent;
  TokenId token;
  double log_prob;
};

}  // namespace

bool ranks_before(const ScoredCaption& a, const ScoredCaption& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return std::lexicographical_compare(a.ids.begin(), a.ids.end(), b.ids.begin(), b.ids.end());
}

std::vector<ScoredCaption> beam_search(std::span<const double> feature,
                                       TokenId start_id,
                                       const ModelParams& params,
                                       const Vocabulary& vocab,
                                       const BeamConfig& config) {
  if (config.width < 1) throw ContractError("beam width must be at least 1");
  if (config.max_len < 1) throw ContractError("max_len must be at least 1");
  check_inputs(params, vocab, start_id);

  std::vector<Hypothesis> live(1);
  live.front().state = primed_state(feature, params);
  std::vector<ScoredCaption> finished;

  while (!live.empty()) {
    std::vector<Candidate> candidates;
    std::vector<LstmState> next_states;
    next_states.reserve(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      StepDistribution step =
          step_distribution(live[h].state, last_input(live[h].ids, start_id), params);
      for (TokenId tok = 0; tok < step.log_probs.size(); ++tok) {
        if (!emittable(vocab, tok)) continue;
        candidates.push_back({h, tok, live[h].log_prob + step.log_probs[tok]});
      }
      next_states.push_back(std::move(step.state));
    }

    // All live hypotheses have equal length, so comparing (parent ids, token)
    // lexicographically is the documented tie-break.
    const auto better = [&](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      const auto& pa = live[a.parent].ids;
      const auto& pb = live[b.parent].ids;
      if (pa != pb) return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
      return a.token < b.token;
    };
    const std::size_t keep = std::min(config.width, candidates.size());
    std::partial_sort(candidates.begin(),
                      candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), better);

    std::vector<Hypothesis> next;
    for (std::size_t k = 0; k < keep; ++k) {
      const Candidate& cand = candidates[k];
      Hypothesis hyp;
      hyp.ids = live[cand.parent].ids;
      hyp.ids.push_back(cand.token);
      hyp.log_prob = cand.log_prob;
      hyp.state = next_states[cand.parent];
      hyp.finished = cand.token == Vocabulary::kEos || hyp.ids.size() >= config.max_len;
      if (hyp.finished) {
        finished.push_back({std::move(hyp.ids), hyp.log_prob});
      } else {
        next.push_back(std::move(hyp));
      }
    }
    live = std::move(next);
  }

  if (config.length_norm) {
    std::stable_sort(finished.begin(), finished.end(),
                     [](const ScoredCaption& a, const ScoredCaption& b) {
                       const double sa = a.log_prob / static_cast<double>(a.ids.size());
                       const double sb = b.log_prob / static_cast<double>(b.ids.size());
                       if (sa != sb) return sa > sb;
                       return ranks_before(a, b);
                     });
  } else {
    std::sort(finished.begin(), finished.end(), ranks_before);
  }
  if (finished.size() > config.width) finished.resize(config.width);
  return finished;
}

ScoredCaption greedy_decode(std::span<const double> feature, TokenId start_id,
                            const ModelParams& params, const Vocabulary& vocab,
                            std::size_t max_len) {
  if (max_len < 1) throw ContractError("max_len must be at least 1");
  check_inputs(params, vocab, start_id);
  ScoredCaption out;
  LstmState state = primed_state(feature, params);
  TokenId input = start_id;
  while (out.ids.size() < max_len) {
    StepDistribution step = step_distribution(state, input, params);
    TokenId best = Vocabulary::kEos;
    double best_lp = -INFINITY;
    for (TokenId tok = 0; tok < step.log_probs.size(); ++tok) {
      if (emittable(vocab, tok) && step.log_probs[tok] > best_lp) {
        best = tok;
        best_lp = step.log_probs[tok];
      }
    }
    out.ids.push_back(best);
    out.log_prob += best_lp;
    if (best == Vocabulary::kEos) break;
    state = std::move(step.state);
    input = best;
  }
  return out;
}

double enumeration_size(std::size_t emittable_tokens, std::size_t max_len) {
  // Sequences ending in <eos> before max_len, plus every length-max_len one.
  const double words = static_cast<double>(emittable_tokens) - 1.0;
  double total = 0.0;
  for (std::size_t len = 1; len < max_len; ++len) {
    total += std::pow(words, static_cast<double>(len - 1));
  }
  total += std::pow(words, static_cast<double>(max_len - 1)) *
           static_cast<double>(emittable_tokens);
  return total;
}

ScoredCaption exhaustive_decode(std::span<const double> feature,
                                TokenId start_id, const ModelParams& params,
                                const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 1) throw ContractError("max_len must be at least 1");
  check_inputs(params, vocab, start_id);
  std::size_t tokens = 0;
  for (TokenId tok = 0; tok < vocab.size(); ++tok) tokens += emittable(vocab, tok);
  const double count = enumeration_size(tokens, max_len);
  if (count > kMaxEnumerated) {
    throw ContractError("exhaustive decode would enumerate " + std::to_string(count) +
                        " sequences (limit " + std::to_string(kMaxEnumerated) + ")");
  }

  ScoredCaption best;
  bool have_best = false;
  std::vector<TokenId> prefix;
  // Depth-first over prefixes; `state` has not yet consumed the last input.
  const auto visit = [&](auto&& self, const LstmState& state, double log_prob) -> void {
    const StepDistribution step =
        step_distribution(state, last_input(prefix, start_id), params);
    for (TokenId tok = 0; tok < step.log_probs.size(); ++tok) {
      if (!emittable(vocab, tok)) continue;
      prefix.push_back(tok);
      const double lp = log_prob + step.log_probs[tok];
      if (tok == Vocabulary::kEos || prefix.size() >= max_len) {
        ScoredCaption cand{prefix, lp};
        if (!have_best || ranks_before(cand, best)) {
          best = std::move(cand);
          have_best = true;
        }
      } else {
        self(self, step.state, lp);
      }
      prefix.pop_back();
    }
  };
  visit(visit, primed_state(feature, params), 0.0);
  return best;
}

}  // namespace mlcap

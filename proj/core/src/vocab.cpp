#include "mlcap/vocab.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "mlcap/errors.hpp"

namespace mlcap {
namespace {

constexpr const char* kSpecialTokens[] = {"<pad>", "<unk>", "<eos>"};

void validate_language(std::string_view language) {
  if (language.empty()) throw ContractError("language code must be non-empty");
  for (char ch : language) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '<' ||
        ch == '>') {
      throw ContractError("invalid language code '" + std::string(language) +
                          "'");
    }
  }
}

}  // namespace

std::string Vocabulary::start_token(std::string_view language) {
  return "<" + std::string(language) + ">";
}

Vocabulary Vocabulary::build(std::span<const LabeledTokens> corpus,
                             int min_count) {
  if (min_count < 1) throw ContractError("min_count must be at least 1");
  if (corpus.empty()) throw ContractError("cannot build a vocabulary from an empty corpus");

  std::set<std::string> languages;
  for (const auto& caption : corpus) {
    validate_language(caption.language);
    languages.insert(caption.language);
  }
  std::set<std::string> reserved(std::begin(kSpecialTokens),
                                 std::end(kSpecialTokens));
  for (const auto& lang : languages) reserved.insert(start_token(lang));

  std::map<std::string, long> counts;
  for (const auto& caption : corpus) {
    for (const auto& tok : caption.tokens) {
      if (tok.empty() || reserved.contains(tok)) continue;
      ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, long>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;  // map order already gives the lexicographic tie-break
  });
  std::vector<std::string> surface;
  surface.reserve(kept.size());
  for (auto& [tok, n] : kept) surface.push_back(tok);
  return from_parts({languages.begin(), languages.end()}, std::move(surface));
}

Vocabulary Vocabulary::from_parts(std::vector<std::string> languages,
                                  std::vector<std::string> surface_tokens) {
  if (languages.empty()) throw ContractError("vocabulary needs at least one language");
  if (!std::is_sorted(languages.begin(), languages.end()) ||
      std::adjacent_find(languages.begin(), languages.end()) != languages.end()) {
    throw ContractError("language codes must be sorted and unique");
  }
  Vocabulary vocab;
  for (const char* special : kSpecialTokens) vocab.id_to_token_.emplace_back(special);
  for (const auto& lang : languages) {
    validate_language(lang);
    vocab.id_to_token_.push_back(start_token(lang));
  }
  vocab.languages_ = std::move(languages);
  for (auto& tok : surface_tokens) vocab.id_to_token_.push_back(std::move(tok));
  for (TokenId id = 0; id < vocab.id_to_token_.size(); ++id) {
    const auto& tok = vocab.id_to_token_[id];
    if (tok.empty()) throw ContractError("vocabulary contains an empty token");
    if (!vocab.token_to_id_.emplace(tok, id).second) {
      throw ContractError("duplicate vocabulary token '" + tok + "'");
    }
  }
  return vocab;
}

std::vector<std::string> Vocabulary::surface_tokens() const {
  return {id_to_token_.begin() + static_cast<std::ptrdiff_t>(first_surface_id()),
          id_to_token_.end()};
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= id_to_token_.size()) {
    throw IndexError("token id " + std::to_string(id) +
                     " outside vocabulary of " + std::to_string(size()));
  }
  return id_to_token_[id];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  const auto it = token_to_id_.find(token);
  if (it == token_to_id_.end() || is_special(it->second)) return std::nullopt;
  return it->second;
}

bool Vocabulary::has_language(std::string_view language) const {
  return std::binary_search(languages_.begin(), languages_.end(), language);
}

TokenId Vocabulary::start_id(std::string_view language) const {
  const auto it = std::lower_bound(languages_.begin(), languages_.end(), language);
  if (it == languages_.end() || *it != language) {
    std::ostringstream msg;
    msg << "unknown language '" << language << "'; available:";
    for (const auto& lang : languages_) msg << ' ' << lang;
    throw ContractError(msg.str());
  }
  return kFirstLanguage + static_cast<TokenId>(it - languages_.begin());
}

bool Vocabulary::is_start(TokenId id) const {
  return id >= kFirstLanguage && id < first_surface_id();
}

TokenSequence encode(std::span<const std::string> tokens,
                     std::string_view language, const Vocabulary& vocab) {
  vocab.start_id(language);  // validates the code
  TokenSequence seq;
  seq.language = std::string(language);
  seq.ids.reserve(tokens.size() + 1);
  for (const auto& tok : tokens) {
    seq.ids.push_back(vocab.find(tok).value_or(Vocabulary::kUnk));
  }
  seq.ids.push_back(Vocabulary::kEos);
  return seq;
}

std::vector<std::string> decode(std::span<const TokenId> ids,
                                const Vocabulary& vocab) {
  for (TokenId id : ids) vocab.token(id);  // range check the whole list
  std::vector<std::string> out;
  for (TokenId id : ids) {
    if (id == Vocabulary::kEos) break;
    if (id == Vocabulary::kPad || vocab.is_start(id)) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::vector<std::string> lowercase(std::span<const std::string> tokens) {
  std::vector<std::string> out(tokens.begin(), tokens.end());
  for (auto& tok : out) {
    for (char& ch : tok) {
      if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
    }
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace mlcap

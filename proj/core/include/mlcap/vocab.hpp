#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mlcap {

using TokenId = std::size_t;

// Tokens of one caption tagged with its language code.
struct LabeledTokens {
  std::string language;
  std::vector<std::string> tokens;
};

// Target ids of one caption: surface ids followed by <eos>. The language start
// token is not stored; the model receives it as its first word input.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::string language;
};

// Bidirectional token <-> id map.
//
// Layout: 0 "<pad>", 1 "<unk>", 2 "<eos>", then one "<code>" start token per
// language in sorted code order, then surface tokens by descending corpus
// frequency with lexicographic tie-break.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kFirstLanguage = 3;

  static std::string start_token(std::string_view language);

  // Throws ContractError on an empty corpus or min_count < 1.
  static Vocabulary build(std::span<const LabeledTokens> corpus,
                          int min_count);

  // Rebuilds from a stored token list (e.g. a checkpoint); validates layout.
  static Vocabulary from_parts(std::vector<std::string> languages,
                               std::vector<std::string> surface_tokens);

  std::size_t size() const { return id_to_token_.size(); }
  std::size_t num_languages() const { return languages_.size(); }
  const std::vector<std::string>& languages() const { return languages_; }
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  std::vector<std::string> surface_tokens() const;

  const std::string& token(TokenId id) const;  // throws IndexError
  // Surface-token lookup; special strings are never matched.
  std::optional<TokenId> find(std::string_view token) const;
  bool has_language(std::string_view language) const;
  // Throws ContractError listing the known codes.
  TokenId start_id(std::string_view language) const;
  bool is_start(TokenId id) const;
  bool is_special(TokenId id) const { return id < first_surface_id(); }
  TokenId first_surface_id() const { return kFirstLanguage + languages_.size(); }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::vector<std::string> id_to_token_;
  std::map<std::string, TokenId, std::less<>> token_to_id_;
  std::vector<std::string> languages_;
};

TokenSequence encode(std::span<const std::string> tokens,
                     std::string_view language, const Vocabulary& vocab);

// Surface tokens up to the first <eos>; pad and start tokens are dropped.
std::vector<std::string> decode(std::span<const TokenId> ids,
                                const Vocabulary& vocab);

// ASCII lowercasing; other bytes pass through unchanged.
std::vector<std::string> lowercase(std::span<const std::string> tokens);

// Whitespace segmentation, the only tokenization this project performs.
std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace mlcap

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hipsgen/corpus.hpp"

namespace hipsgen {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kBos = 2;
inline constexpr TokenId kEos = 3;
inline constexpr TokenId kNewline = 4;
inline constexpr std::size_t kReservedCount = 5;

// Case-sensitive word vocabulary. Ids [0, 5) are PAD, UNK, BOS, EOS, NEWLINE.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return tokens_.size(); }
  // UNK for unknown words.
  TokenId id_of(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  // Regular (non-reserved) tokens in id order.
  std::vector<std::string> words() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
  std::string serialize() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Reserved token spellings inside the vocabulary file header.
std::vector<std::string> reserved_token_names();

// Every word with frequency >= min_freq, sorted by frequency desc then
// lexicographically. `always_include` words are added regardless of count.
Vocabulary build_vocab(const std::vector<Document>& corpus, std::size_t min_freq,
                       const std::vector<std::string>& always_include = {});
Vocabulary build_vocab_from_texts(const std::vector<std::string>& texts, std::size_t min_freq,
                                  const std::vector<std::string>& always_include = {});

struct TokenizedDocument {
  std::vector<TokenId> ids;
  std::vector<std::pair<std::size_t, std::size_t>> offsets;  // code points into the source
};

TokenizedDocument tokenize(std::string_view text, const Vocabulary& vocab);
std::vector<TokenId> tokenize_ids(std::string_view text, const Vocabulary& vocab);

// PAD/BOS/EOS are skipped; NEWLINE becomes '\n'; UNK renders as "<unk>".
std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab);

}  // namespace hipsgen

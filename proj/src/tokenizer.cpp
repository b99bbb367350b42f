#include "hipsgen/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "hipsgen/text.hpp"

namespace hipsgen {

namespace {

const std::vector<std::string> kReservedSpellings = {"<pad>", "<unk>", "<bos>", "<eos>", "\n"};
const std::vector<std::string> kReservedFileNames = {"<pad>", "<unk>", "<bos>", "<eos>", "<nl>"};
constexpr std::string_view kHeaderPrefix = "#reserved";

}  // namespace

std::vector<std::string> reserved_token_names() { return kReservedFileNames; }

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  tokens_ = kReservedSpellings;
  for (auto& w : words) {
    if (w.empty()) throw CorpusError("empty vocabulary token");
    for (char c : w) {
      if (c == ' ' || c == '\n' || c == '\t' || c == '\r') {
        throw CorpusError("vocabulary token contains whitespace: '" + w + "'");
      }
    }
    tokens_.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw CorpusError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

TokenId Vocabulary::id_of(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::words() const {
  return {tokens_.begin() + static_cast<std::ptrdiff_t>(kReservedCount), tokens_.end()};
}

std::string Vocabulary::serialize() const {
  std::string out(kHeaderPrefix);
  for (const auto& n : kReservedFileNames) out += " " + n;
  out += '\n';
  for (std::size_t i = kReservedCount; i < tokens_.size(); ++i) out += tokens_[i] + '\n';
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write vocabulary " + path.string());
  out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open vocabulary " + path.string());
  std::string header;
  std::getline(in, header);
  std::string expected(kHeaderPrefix);
  for (const auto& n : kReservedFileNames) expected += " " + n;
  if (header != expected) throw CorpusError("vocabulary " + path.string() + ": unexpected header '" + header + "'");
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) words.push_back(line);
  return Vocabulary(std::move(words));
}

Vocabulary build_vocab_from_texts(const std::vector<std::string>& texts, std::size_t min_freq,
                                  const std::vector<std::string>& always_include) {
  if (min_freq == 0) min_freq = 1;
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts) {
    for (auto& w : word_tokens(t)) ++counts[w];
  }
  for (const auto& extra : always_include) {
    for (auto& w : word_tokens(extra)) counts[w] = std::max(counts[w], min_freq);
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, n] : counts) {
    if (n >= min_freq && std::find(kReservedSpellings.begin(), kReservedSpellings.end(), w) == kReservedSpellings.end()) {
      kept.emplace_back(w, n);
    }
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, n] : kept) words.push_back(w);
  return Vocabulary(std::move(words));
}

Vocabulary build_vocab(const std::vector<Document>& corpus, std::size_t min_freq,
                       const std::vector<std::string>& always_include) {
  std::vector<std::string> texts;
  texts.reserve(corpus.size());
  for (const auto& d : corpus) texts.push_back(d.text);
  return build_vocab_from_texts(texts, min_freq, always_include);
}

TokenizedDocument tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenizedDocument out;
  for (const auto& p : split_words(text)) {
    out.ids.push_back(p.newline ? kNewline : vocab.id_of(p.text));
    out.offsets.emplace_back(p.start, p.end);
  }
  return out;
}

std::vector<TokenId> tokenize_ids(std::string_view text, const Vocabulary& vocab) { return tokenize(text, vocab).ids; }

std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (TokenId id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    words.push_back(vocab.token(id));
  }
  return join_words(words);
}

}  // namespace hipsgen

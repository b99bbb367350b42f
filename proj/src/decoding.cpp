#include "hipsgen/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "hipsgen/text.hpp"

namespace hipsgen {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void DecodeConfig::validate() const {
  if (!(temperature > 0.0)) throw DecodingError("temperature must be positive");
  if (!(top_p > 0.0) || top_p > 1.0) throw DecodingError("top_p must lie in (0, 1]");
  if (max_new_tokens == 0) throw DecodingError("max_new_tokens must be at least 1");
}

void BadTokenList::add(std::vector<TokenId> seq) {
  if (seq.empty()) return;
  auto it = std::lower_bound(sequences.begin(), sequences.end(), seq);
  if (it == sequences.end() || *it != seq) sequences.insert(it, std::move(seq));
}

BadTokenList build_bad_token_list_from_values(const std::vector<std::string>& values, const Vocabulary& vocab,
                                              std::size_t expansion_cap) {
  std::map<std::string, std::vector<TokenId>> by_lower;
  const auto words = vocab.words();
  for (std::size_t i = 0; i < words.size(); ++i) {
    by_lower[lowercase(words[i])].push_back(static_cast<TokenId>(i + kReservedCount));
  }

  BadTokenList bad;
  for (const auto& value : values) {
    bool any_known = false;
    for (const auto& variant : case_variants(value)) {
      auto ids = tokenize_ids(variant, vocab);
      if (std::any_of(ids.begin(), ids.end(), [](TokenId t) { return t != kUnk; })) any_known = true;
      bad.add(std::move(ids));
    }
    if (!any_known && !word_tokens(value).empty()) bad.unblockable.push_back(value);

    // Mixed casings the vocabulary can actually produce.
    std::vector<const std::vector<TokenId>*> choices;
    std::size_t combos = 1;
    bool producible = true;
    for (const auto& w : word_tokens(value)) {
      auto it = by_lower.find(lowercase(w));
      if (it == by_lower.end()) {
        producible = false;
        break;
      }
      choices.push_back(&it->second);
      combos *= it->second.size();
      if (combos > expansion_cap) break;
    }
    if (!producible || choices.empty() || combos > expansion_cap) continue;
    std::vector<std::size_t> idx(choices.size(), 0);
    while (true) {
      std::vector<TokenId> seq;
      for (std::size_t k = 0; k < choices.size(); ++k) seq.push_back((*choices[k])[idx[k]]);
      bad.add(std::move(seq));
      std::size_t k = 0;
      while (k < idx.size() && ++idx[k] == choices[k]->size()) idx[k++] = 0;
      if (k == idx.size()) break;
    }
  }
  return bad;
}

BadTokenList build_bad_token_list(const std::vector<ControlCode>& codes, const Vocabulary& vocab,
                                  std::size_t expansion_cap) {
  std::vector<std::string> values;
  for (const auto& c : codes) {
    for (const auto& v : c.values()) values.push_back(v);
  }
  return build_bad_token_list_from_values(values, vocab, expansion_cap);
}

bool apply_bad_token_filter(std::span<double> logits, std::span<const TokenId> generated, const BadTokenList& bad) {
  for (const auto& seq : bad.sequences) {
    const std::size_t need = seq.size() - 1;
    if (need > generated.size()) continue;
    if (!std::equal(seq.begin(), seq.end() - 1, generated.end() - static_cast<std::ptrdiff_t>(need))) continue;
    const auto tok = static_cast<std::size_t>(seq.back());
    if (tok < logits.size()) logits[tok] = kNegInf;
  }
  if (std::any_of(logits.begin(), logits.end(), [](double x) { return std::isfinite(x); })) return false;
  std::fill(logits.begin(), logits.end(), kNegInf);
  if (static_cast<std::size_t>(kEos) < logits.size()) logits[kEos] = 0.0;
  return true;
}

Nucleus compute_nucleus(std::span<const double> logits, double temperature, double top_p) {
  if (!(temperature > 0.0)) throw DecodingError("temperature must be positive");
  std::vector<TokenId> ids;
  double m = kNegInf;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (std::isfinite(logits[i])) {
      ids.push_back(static_cast<TokenId>(i));
      m = std::max(m, logits[i] / temperature);
    }
  }
  if (ids.empty()) throw DecodingError("no finite logit to sample from");
  std::vector<double> p(logits.size(), 0.0);
  double sum = 0.0;
  for (auto id : ids) {
    p[static_cast<std::size_t>(id)] = std::exp(logits[static_cast<std::size_t>(id)] / temperature - m);
    sum += p[static_cast<std::size_t>(id)];
  }
  for (auto id : ids) p[static_cast<std::size_t>(id)] /= sum;
  std::stable_sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) {
    return p[static_cast<std::size_t>(a)] > p[static_cast<std::size_t>(b)];
  });

  Nucleus n;
  double cum = 0.0;
  for (auto id : ids) {
    n.ids.push_back(id);
    cum += p[static_cast<std::size_t>(id)];
    if (top_p < 1.0 && cum >= top_p - 1e-12) break;
  }
  double kept = 0.0;
  for (auto id : n.ids) kept += p[static_cast<std::size_t>(id)];
  for (auto id : n.ids) n.probs.push_back(p[static_cast<std::size_t>(id)] / kept);
  return n;
}

namespace {

TokenId draw(const Nucleus& n, RandomSource& rng) {
  const double u = rng.uniform01();
  double cum = 0.0;
  for (std::size_t i = 0; i < n.ids.size(); ++i) {
    cum += n.probs[i];
    if (u < cum && n.probs[i] > 0.0) return n.ids[i];
  }
  for (std::size_t i = n.ids.size(); i-- > 0;) {
    if (n.probs[i] > 0.0) return n.ids[i];
  }
  return n.ids.front();
}

}  // namespace

TokenId sample_token(std::span<const double> logits, double temperature, double top_p, RandomSource& rng) {
  return draw(compute_nucleus(logits, temperature, top_p), rng);
}

std::string assemble_icl_prompt_text(const std::vector<std::pair<ControlCode, Document>>& examples,
                                     const ControlCode& fictional, bool with_codes) {
  if (examples.size() < 3) {
    throw DecodingError("ICL prompt needs three examples, got " + std::to_string(examples.size()));
  }
  std::string out;
  for (const auto& [code, doc] : examples) {
    if (with_codes) out += render(code);
    out += doc.text;
    out += "\n\n";
  }
  if (with_codes) out += render(fictional);
  return out;
}

std::vector<TokenId> assemble_icl_prompt(const std::vector<std::pair<ControlCode, Document>>& examples,
                                         const ControlCode& fictional, const Vocabulary& vocab, std::size_t budget,
                                         bool with_codes) {
  if (examples.size() < 3) {
    throw DecodingError("ICL prompt needs three examples, got " + std::to_string(examples.size()));
  }
  std::vector<TokenId> ids{kBos};
  for (const auto& [code, doc] : examples) {
    std::string block = with_codes ? render(code) : std::string();
    block += doc.text;
    block += "\n\n";
    const auto part = tokenize_ids(block, vocab);
    ids.insert(ids.end(), part.begin(), part.end());
    if (ids.size() > budget) {
      throw DecodingError("ICL prompt overflows the context at example '" + doc.id + "' (" +
                          std::to_string(ids.size()) + " > " + std::to_string(budget) + " tokens)");
    }
  }
  if (with_codes) {
    const auto part = tokenize_ids(render(fictional), vocab);
    ids.insert(ids.end(), part.begin(), part.end());
    if (ids.size() > budget) {
      throw DecodingError("ICL prompt overflows the context at the fictional code (" + std::to_string(ids.size()) +
                          " > " + std::to_string(budget) + " tokens)");
    }
  }
  return ids;
}

InternalBackend::InternalBackend(const LmParams& params, const PrefixParams* prefix, const Vocabulary& vocab)
    : params_(params), prefix_(prefix), vocab_(vocab) {
  if (vocab.size() != params.dims.vocab) throw DecodingError("vocabulary size does not match the model");
}

GenerationResult InternalBackend::generate(const std::string& prompt, const DecodeConfig& config,
                                           const BadTokenList* bad) {
  std::vector<TokenId> ids{kBos};
  const auto body = tokenize_ids(prompt, vocab_);
  ids.insert(ids.end(), body.begin(), body.end());
  return generate_ids(ids, config, bad);
}

GenerationResult InternalBackend::generate_ids(std::span<const TokenId> prompt_ids, const DecodeConfig& config,
                                               const BadTokenList* bad, std::vector<SampleStep>* steps) {
  config.validate();
  if (prompt_ids.empty()) throw DecodingError("generation needs a non-empty prompt");
  IncrementalDecoder dec(params_, prefix_);
  if (dec.length() + prompt_ids.size() >= dec.capacity()) {
    throw DecodingError("prompt of " + std::to_string(prompt_ids.size()) + " tokens leaves no room in a context of " +
                        std::to_string(dec.capacity()));
  }
  RowVector logits;
  for (auto t : prompt_ids) logits = dec.push(t);

  SeededRng rng(config.seed);
  GenerationResult res;
  std::vector<double> row(static_cast<std::size_t>(logits.size()));
  for (std::size_t step = 0; step < config.max_new_tokens; ++step) {
    std::copy(logits.data(), logits.data() + logits.size(), row.begin());
    for (auto t : {kPad, kBos, kUnk}) row[static_cast<std::size_t>(t)] = kNegInf;
    if (bad && !bad->empty() && apply_bad_token_filter(row, res.tokens, *bad)) ++res.forced_eos;
    auto nucleus = compute_nucleus(row, config.temperature, config.top_p);
    const TokenId tok = draw(nucleus, rng);
    if (steps) steps->push_back({std::move(nucleus), tok});
    if (tok == kEos) break;
    res.tokens.push_back(tok);
    const auto n = res.tokens.size();
    if (tok == kNewline && n >= 2 && res.tokens[n - 2] == kNewline) break;
    if (step + 1 == config.max_new_tokens) break;
    if (dec.length() + 1 >= dec.capacity()) {
      res.hit_context_limit = true;
      break;
    }
    logits = dec.push(tok);
  }
  res.text = detokenize(res.tokens, vocab_);
  while (!res.text.empty() && (res.text.back() == '\n' || res.text.back() == ' ')) res.text.pop_back();
  return res;
}

CleanResult generate_until_clean(GenerationBackend& backend, const std::string& prompt, const DecodeConfig& config,
                                 const std::vector<std::string>& entities, std::size_t max_attempts,
                                 const MatchPolicy& policy, const BadTokenList* bad) {
  if (max_attempts == 0) throw DecodingError("max_attempts must be at least 1");
  CleanResult res;
  for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
    DecodeConfig c = config;
    c.seed = derive_seed(config.seed, attempt);
    auto gen = backend.generate(prompt, c, bad);
    auto m = contains_private(gen.text, entities, policy);
    res.text = std::move(gen.text);
    res.attempts = attempt;
    res.matched = std::move(m.matched);
    res.clean = !m.found;
    if (res.clean) break;
  }
  return res;
}

}  // namespace hipsgen

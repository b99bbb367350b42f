#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hipsgen/control_code.hpp"
#include "hipsgen/corpus.hpp"
#include "hipsgen/lm.hpp"
#include "hipsgen/metrics.hpp"
#include "hipsgen/rng.hpp"
#include "hipsgen/tokenizer.hpp"

namespace hipsgen {

struct DecodingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DecodeConfig {
  std::size_t max_new_tokens = 400;
  double temperature = 0.7;
  double top_p = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BadTokenList {
  std::vector<std::vector<TokenId>> sequences;  // sorted, unique, non-empty
  std::vector<std::string> unblockable;         // values that tokenize to UNK only

  bool empty() const { return sequences.empty(); }
  std::size_t size() const { return sequences.size(); }
  void add(std::vector<TokenId> seq);
};

// Bans every case variant of every value. Besides the four whole-string
// variants, each token may take any casing present in the vocabulary (up to
// `expansion_cap` combinations per value).
BadTokenList build_bad_token_list(const std::vector<ControlCode>& codes, const Vocabulary& vocab,
                                  std::size_t expansion_cap = 256);
BadTokenList build_bad_token_list_from_values(const std::vector<std::string>& values, const Vocabulary& vocab,
                                              std::size_t expansion_cap = 256);

// Sets to -inf the logit of every token that would complete a banned
// sequence given the generated suffix. If nothing finite is left, EOS is
// forced and true is returned.
bool apply_bad_token_filter(std::span<double> logits, std::span<const TokenId> generated, const BadTokenList& bad);

struct Nucleus {
  std::vector<TokenId> ids;    // probability desc, ties by lower id
  std::vector<double> probs;   // renormalized within the nucleus
};

Nucleus compute_nucleus(std::span<const double> logits, double temperature, double top_p);
TokenId sample_token(std::span<const double> logits, double temperature, double top_p, RandomSource& rng);

// Blocks "render(c_i) d_i" separated by blank lines, then render(c_f).
// Without codes (baseline) only the documents are written.
std::string assemble_icl_prompt_text(const std::vector<std::pair<ControlCode, Document>>& examples,
                                     const ControlCode& fictional, bool with_codes = true);

// Token form, checked against `budget` tokens (BOS included). Throws naming
// the example that overflows.
std::vector<TokenId> assemble_icl_prompt(const std::vector<std::pair<ControlCode, Document>>& examples,
                                         const ControlCode& fictional, const Vocabulary& vocab, std::size_t budget,
                                         bool with_codes = true);

struct GenerationResult {
  std::string text;
  std::vector<TokenId> tokens;
  std::size_t forced_eos = 0;
  bool hit_context_limit = false;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual bool supports_logit_filtering() const = 0;
  // `bad` is honored only when logit filtering is supported.
  virtual GenerationResult generate(const std::string& prompt, const DecodeConfig& config,
                                    const BadTokenList* bad) = 0;
};

// Step-level record used by soundness checks.
struct SampleStep {
  Nucleus nucleus;
  TokenId token = kPad;
};

// Toy-LM backend. The prompt is tokenized after BOS; PAD, BOS and UNK are
// never sampled. Stops at EOS, at two consecutive newlines, after
// max_new_tokens or when the context is full.
class InternalBackend final : public GenerationBackend {
 public:
  InternalBackend(const LmParams& params, const PrefixParams* prefix, const Vocabulary& vocab);

  bool supports_logit_filtering() const override { return true; }
  GenerationResult generate(const std::string& prompt, const DecodeConfig& config, const BadTokenList* bad) override;
  GenerationResult generate_ids(std::span<const TokenId> prompt_ids, const DecodeConfig& config,
                                const BadTokenList* bad, std::vector<SampleStep>* steps = nullptr);

 private:
  const LmParams& params_;
  const PrefixParams* prefix_;
  const Vocabulary& vocab_;
};

struct CleanResult {
  std::string text;
  std::size_t attempts = 0;
  bool clean = false;
  std::vector<std::string> matched;  // leaks found in the returned text
};

// Regenerates with seed derive_seed(config.seed, attempt) until no entity
// is found, returning the last attempt flagged unclean otherwise.
CleanResult generate_until_clean(GenerationBackend& backend, const std::string& prompt, const DecodeConfig& config,
                                 const std::vector<std::string>& entities, std::size_t max_attempts,
                                 const MatchPolicy& policy = {}, const BadTokenList* bad = nullptr);

}  // namespace hipsgen

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hipsgen/corpus.hpp"
#include "hipsgen/lm.hpp"
#include "hipsgen/tokenizer.hpp"

namespace hipsgen {

struct MetricsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class CaseSensitivity { INSENSITIVE, SENSITIVE };

// Entities match as contiguous runs of word tokens of the output text.
struct MatchPolicy {
  CaseSensitivity case_sensitivity = CaseSensitivity::INSENSITIVE;

  bool operator==(const MatchPolicy&) const = default;
};

std::string_view to_string(CaseSensitivity c);
CaseSensitivity parse_case_sensitivity(std::string_view text);

// Normalized token run of an entity under `policy`; also the dedup key.
std::vector<std::string> entity_key(std::string_view entity, const MatchPolicy& policy);

struct MatchResult {
  bool found = false;
  std::vector<std::string> matched;  // entities as given, in input order
};

MatchResult contains_private(std::string_view text, const std::vector<std::string>& entities,
                             const MatchPolicy& policy = {});

struct LeakageReport {
  double pipp = 0.0;
  double elp = 0.0;
  std::vector<bool> flags;
  std::vector<std::vector<std::string>> matched;  // per output
  std::vector<std::string> leaked;                // deduplicated
};

// Per-output entity lists (ICL) or one global list (fine-tuning).
double pipp(const std::vector<std::string>& outputs, const std::vector<std::vector<std::string>>& per_output_entities,
            const MatchPolicy& policy = {});
double pipp(const std::vector<std::string>& outputs, const std::vector<std::string>& global_entities,
            const MatchPolicy& policy = {});

// Mean over samples of matched / context entities; empty contexts count 0.
double elp_icl(const std::vector<std::string>& outputs,
               const std::vector<std::vector<std::string>>& per_output_entities, const MatchPolicy& policy = {});

// Distinct leaked entities over distinct training entities.
double elp_ft(const std::vector<std::string>& outputs, const std::vector<std::string>& training_entities,
              const MatchPolicy& policy = {});

LeakageReport leakage_icl(const std::vector<std::string>& outputs,
                          const std::vector<std::vector<std::string>>& per_output_entities,
                          const MatchPolicy& policy = {});
LeakageReport leakage_ft(const std::vector<std::string>& outputs, const std::vector<std::string>& training_entities,
                         const MatchPolicy& policy = {});

// ROUGE F1 over word tokens (case-sensitive, newlines excluded).
double rouge2_tokens(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);
double rougeL_tokens(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);
double rouge2(std::string_view candidate, std::string_view reference);
double rougeL(std::string_view candidate, std::string_view reference);

enum class RougeKind { ROUGE2, ROUGEL };

struct RougeMax {
  double score = 0.0;
  std::string doc_id;
};

// Best score over `docs`; ties go to the lexicographically lowest id.
RougeMax rouge_vs_training_max(std::string_view candidate, const std::vector<Document>& docs, RougeKind which);

struct PerplexityResult {
  double perplexity = 0.0;
  std::size_t tokens = 0;
  std::size_t clamped = 0;
  std::size_t truncated_docs = 0;
};

// exp(mean over all targets of -ln p); each inner vector holds the target
// probabilities of one document.
PerplexityResult perplexity_from_probs(const std::vector<std::vector<double>>& target_probs);

// Targets are each document's tokens plus EOS, read after BOS and the
// optional conditioning tokens. Documents longer than the context are cut.
PerplexityResult perplexity(const LmParams& params, const PrefixParams* prefix,
                            const std::vector<std::vector<TokenId>>& test_docs,
                            const std::vector<std::vector<TokenId>>& conditioning = {});

// Base-2 Jensen-Shannon divergence of add-one smoothed unigram
// distributions over the union vocabulary of both sides.
double unigram_js_divergence(const std::vector<std::string>& generated, const std::vector<std::string>& reference);

}  // namespace hipsgen

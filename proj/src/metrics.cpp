#include "hipsgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "hipsgen/text.hpp"
#include "hipsgen/training.hpp"

namespace hipsgen {

std::string_view to_string(CaseSensitivity c) {
  return c == CaseSensitivity::INSENSITIVE ? "insensitive" : "sensitive";
}

CaseSensitivity parse_case_sensitivity(std::string_view text) {
  if (text == "insensitive") return CaseSensitivity::INSENSITIVE;
  if (text == "sensitive") return CaseSensitivity::SENSITIVE;
  throw MetricsError("unknown case sensitivity '" + std::string(text) + "'");
}

namespace {

// Output pieces with newlines kept as "\n" so entities never match across them.
std::vector<std::string> output_pieces(std::string_view text, const MatchPolicy& policy) {
  std::vector<std::string> out;
  for (const auto& p : split_words(text)) {
    if (p.newline) {
      out.emplace_back("\n");
    } else {
      out.push_back(policy.case_sensitivity == CaseSensitivity::INSENSITIVE ? lowercase(p.text) : p.text);
    }
  }
  return out;
}

bool contains_run(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

void require_outputs(const std::vector<std::string>& outputs, const char* what) {
  if (outputs.empty()) throw MetricsError(std::string(what) + " needs at least one output");
}

}  // namespace

std::vector<std::string> entity_key(std::string_view entity, const MatchPolicy& policy) {
  auto words = word_tokens(entity);
  if (policy.case_sensitivity == CaseSensitivity::INSENSITIVE) {
    for (auto& w : words) w = lowercase(w);
  }
  return words;
}

MatchResult contains_private(std::string_view text, const std::vector<std::string>& entities,
                             const MatchPolicy& policy) {
  MatchResult res;
  if (entities.empty()) return res;
  const auto hay = output_pieces(text, policy);
  for (const auto& e : entities) {
    if (contains_run(hay, entity_key(e, policy))) res.matched.push_back(e);
  }
  res.found = !res.matched.empty();
  return res;
}

LeakageReport leakage_icl(const std::vector<std::string>& outputs,
                          const std::vector<std::vector<std::string>>& per_output_entities,
                          const MatchPolicy& policy) {
  require_outputs(outputs, "leakage evaluation");
  if (per_output_entities.size() != outputs.size()) {
    throw MetricsError("per-output entity lists must match the number of outputs");
  }
  LeakageReport r;
  std::set<std::vector<std::string>> seen;
  std::size_t leaking = 0;
  double ratio_sum = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    auto m = contains_private(outputs[i], per_output_entities[i], policy);
    r.flags.push_back(m.found);
    if (m.found) ++leaking;
    if (!per_output_entities[i].empty()) {
      ratio_sum += static_cast<double>(m.matched.size()) / static_cast<double>(per_output_entities[i].size());
    }
    for (const auto& e : m.matched) {
      if (seen.insert(entity_key(e, policy)).second) r.leaked.push_back(e);
    }
    r.matched.push_back(std::move(m.matched));
  }
  r.pipp = 100.0 * static_cast<double>(leaking) / static_cast<double>(outputs.size());
  r.elp = 100.0 * ratio_sum / static_cast<double>(outputs.size());
  return r;
}

LeakageReport leakage_ft(const std::vector<std::string>& outputs, const std::vector<std::string>& training_entities,
                         const MatchPolicy& policy) {
  require_outputs(outputs, "leakage evaluation");
  if (training_entities.empty()) throw MetricsError("fine-tuning leakage needs a non-empty training entity list");
  std::vector<std::string> distinct;
  std::set<std::vector<std::string>> keys;
  for (const auto& e : training_entities) {
    auto k = entity_key(e, policy);
    if (!k.empty() && keys.insert(std::move(k)).second) distinct.push_back(e);
  }
  if (distinct.empty()) throw MetricsError("fine-tuning leakage needs a non-empty training entity list");
  LeakageReport r;
  std::set<std::vector<std::string>> seen;
  std::size_t leaking = 0;
  for (const auto& out : outputs) {
    auto m = contains_private(out, distinct, policy);
    r.flags.push_back(m.found);
    if (m.found) ++leaking;
    for (const auto& e : m.matched) {
      if (seen.insert(entity_key(e, policy)).second) r.leaked.push_back(e);
    }
    r.matched.push_back(std::move(m.matched));
  }
  r.pipp = 100.0 * static_cast<double>(leaking) / static_cast<double>(outputs.size());
  r.elp = 100.0 * static_cast<double>(r.leaked.size()) / static_cast<double>(distinct.size());
  return r;
}

double pipp(const std::vector<std::string>& outputs, const std::vector<std::vector<std::string>>& per_output_entities,
            const MatchPolicy& policy) {
  return leakage_icl(outputs, per_output_entities, policy).pipp;
}

double pipp(const std::vector<std::string>& outputs, const std::vector<std::string>& global_entities,
            const MatchPolicy& policy) {
  require_outputs(outputs, "pipp");
  std::size_t leaking = 0;
  for (const auto& out : outputs) leaking += contains_private(out, global_entities, policy).found ? 1 : 0;
  return 100.0 * static_cast<double>(leaking) / static_cast<double>(outputs.size());
}

double elp_icl(const std::vector<std::string>& outputs,
               const std::vector<std::vector<std::string>>& per_output_entities, const MatchPolicy& policy) {
  return leakage_icl(outputs, per_output_entities, policy).elp;
}

double elp_ft(const std::vector<std::string>& outputs, const std::vector<std::string>& training_entities,
              const MatchPolicy& policy) {
  return leakage_ft(outputs, training_entities, policy).elp;
}

namespace {

double f1(double match, double n_cand, double n_ref) {
  if (match <= 0.0 || n_cand <= 0.0 || n_ref <= 0.0) return 0.0;
  const double p = match / n_cand;
  const double r = match / n_ref;
  return 2.0 * p * r / (p + r);
}

}  // namespace

double rouge2_tokens(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  if (candidate.size() < 2 || reference.size() < 2) return 0.0;
  std::map<std::pair<std::string, std::string>, std::size_t> ref_counts;
  for (std::size_t i = 0; i + 1 < reference.size(); ++i) ++ref_counts[{reference[i], reference[i + 1]}];
  std::size_t match = 0;
  for (std::size_t i = 0; i + 1 < candidate.size(); ++i) {
    auto it = ref_counts.find({candidate[i], candidate[i + 1]});
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++match;
    }
  }
  return f1(static_cast<double>(match), static_cast<double>(candidate.size() - 1),
            static_cast<double>(reference.size() - 1));
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rougeL_tokens(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  return f1(static_cast<double>(lcs_length(candidate, reference)), static_cast<double>(candidate.size()),
            static_cast<double>(reference.size()));
}

double rouge2(std::string_view candidate, std::string_view reference) {
  return rouge2_tokens(word_tokens(candidate), word_tokens(reference));
}

double rougeL(std::string_view candidate, std::string_view reference) {
  return rougeL_tokens(word_tokens(candidate), word_tokens(reference));
}

RougeMax rouge_vs_training_max(std::string_view candidate, const std::vector<Document>& docs, RougeKind which) {
  if (docs.empty()) throw MetricsError("ROUGE against training needs at least one document");
  const auto cand = word_tokens(candidate);
  RougeMax best;
  bool first = true;
  for (const auto& d : docs) {
    const auto ref = word_tokens(d.text);
    const double s = which == RougeKind::ROUGE2 ? rouge2_tokens(cand, ref) : rougeL_tokens(cand, ref);
    if (first || s > best.score || (s == best.score && d.id < best.doc_id)) {
      best = {s, d.id};
      first = false;
    }
  }
  return best;
}

PerplexityResult perplexity_from_probs(const std::vector<std::vector<double>>& target_probs) {
  PerplexityResult r;
  double nll = 0.0;
  for (const auto& doc : target_probs) {
    for (double p : doc) {
      if (p < kProbFloor) {
        ++r.clamped;
        p = kProbFloor;
      }
      nll -= std::log(p);
      ++r.tokens;
    }
  }
  if (r.tokens == 0) throw MetricsError("perplexity needs at least one target token");
  r.perplexity = std::exp(nll / static_cast<double>(r.tokens));
  return r;
}

PerplexityResult perplexity(const LmParams& params, const PrefixParams* prefix,
                            const std::vector<std::vector<TokenId>>& test_docs,
                            const std::vector<std::vector<TokenId>>& conditioning) {
  if (test_docs.empty()) throw MetricsError("perplexity needs a non-empty test set");
  if (!conditioning.empty() && conditioning.size() != test_docs.size()) {
    throw MetricsError("conditioning must be empty or match the test set");
  }
  const std::size_t n_prefix = prefix ? prefix->n_virtual() : 0;
  const std::size_t room = params.dims.context_len - std::min(params.dims.context_len, n_prefix);
  std::size_t truncated = 0;
  std::vector<std::vector<double>> probs;
  for (std::size_t i = 0; i < test_docs.size(); ++i) {
    std::vector<TokenId> seq{kBos};
    if (!conditioning.empty()) seq.insert(seq.end(), conditioning[i].begin(), conditioning[i].end());
    const std::size_t first_target = seq.size();
    seq.insert(seq.end(), test_docs[i].begin(), test_docs[i].end());
    seq.push_back(kEos);
    if (seq.size() > room) {
      ++truncated;
      seq.resize(room);
    }
    if (seq.size() <= first_target) continue;
    const std::span<const TokenId> input(seq.data(), seq.size() - 1);
    const Matrix logits = forward(params, prefix, input);
    std::vector<double> doc_probs;
    for (std::size_t t = first_target; t < seq.size(); ++t) {
      const RowVector row = logits.row(static_cast<Eigen::Index>(t - 1));
      const auto p = softmax(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
      doc_probs.push_back(p[static_cast<std::size_t>(seq[t])]);
    }
    probs.push_back(std::move(doc_probs));
  }
  auto r = perplexity_from_probs(probs);
  r.truncated_docs = truncated;
  return r;
}

double unigram_js_divergence(const std::vector<std::string>& generated, const std::vector<std::string>& reference) {
  if (generated.empty() || reference.empty()) throw MetricsError("JS divergence needs texts on both sides");
  std::map<std::string, std::pair<double, double>> counts;
  double na = 0.0;
  double nb = 0.0;
  for (const auto& t : generated) {
    for (const auto& w : word_tokens(t)) {
      counts[w].first += 1.0;
      na += 1.0;
    }
  }
  for (const auto& t : reference) {
    for (const auto& w : word_tokens(t)) {
      counts[w].second += 1.0;
      nb += 1.0;
    }
  }
  if (counts.empty()) return 0.0;
  const double v = static_cast<double>(counts.size());
  double js = 0.0;
  for (const auto& [w, c] : counts) {
    const double p = (c.first + 1.0) / (na + v);
    const double q = (c.second + 1.0) / (nb + v);
    const double m = 0.5 * (p + q);
    js += 0.5 * p * std::log2(p / m) + 0.5 * q * std::log2(q / m);
  }
  return std::clamp(js, 0.0, 1.0);
}

}  // namespace hipsgen

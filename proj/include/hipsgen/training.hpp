#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hipsgen/control_code.hpp"
#include "hipsgen/corpus.hpp"
#include "hipsgen/lm.hpp"
#include "hipsgen/tokenizer.hpp"

namespace hipsgen {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kProbFloor = 1e-12;

// One bit per target token: 0 on private tokens, 1 elsewhere.
using PrivacyMask = std::vector<std::uint8_t>;

// M_t = 0 iff token t's offsets overlap a span whose class is in `classes`.
PrivacyMask build_mask(const TokenizedDocument& tdoc, const std::vector<EntitySpan>& spans, ClassSet classes);

enum class ContrastiveSign { AS_WRITTEN, NEGATED };

std::string_view to_string(ContrastiveSign s);
std::optional<ContrastiveSign> parse_contrastive_sign(std::string_view text);

struct LossWeights {
  double lm = 1.0;
  double contrastive = 1.0;
  double kl = 1.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct ClampStats {
  std::size_t lm_clamped = 0;
  std::size_t contrastive_clamped = 0;
  std::size_t contrastive_skipped = 0;
  std::size_t kl_clamped = 0;

  ClampStats& operator+=(const ClampStats& o);
  std::size_t total() const { return lm_clamped + contrastive_clamped + contrastive_skipped + kl_clamped; }
};

// Distributions are row-per-position probability matrices.

// -sum_t ln P(y_t). With `mask`, only positions with M_t = 1 count.
double lm_loss(const Matrix& p_theta, std::span<const TokenId> targets, ClampStats* stats = nullptr,
               const PrivacyMask* mask = nullptr);

// -sum_t (1 - M_t) ln(P(y_t) / (P(y_t) + P_base(y_t))), sign flipped for NEGATED.
double contrastive_loss(const Matrix& p_theta, const Matrix& p_base, std::span<const TokenId> targets,
                        const PrivacyMask& mask, ContrastiveSign sign = ContrastiveSign::AS_WRITTEN,
                        ClampStats* stats = nullptr);

// sum_t M_t KL(P_base || P_theta).
double kl_loss(const Matrix& p_theta, const Matrix& p_base, const PrivacyMask& mask, ClampStats* stats = nullptr);

struct LossComponents {
  double lm = 0.0;
  double contrastive = 0.0;
  double kl = 0.0;

  LossComponents& operator+=(const LossComponents& o);
  LossComponents scaled(double f) const { return {lm * f, contrastive * f, kl * f}; }
};

double total_loss(const LossComponents& c, const LossWeights& w);

struct TrainConfig {
  std::size_t epochs = 3;
  double learning_rate = 5e-5;
  std::size_t batch_size = 8;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  ContrastiveSign contrastive_sign = ContrastiveSign::AS_WRITTEN;
  bool mask_lm = false;
  std::size_t n_virtual = kDefaultVirtualTokens;

  void validate() const;
};

// Model input is BOS + input + target; targets are predicted from the
// position before them. `target` ends with EOS.
struct TrainingPair {
  std::string id;
  std::vector<TokenId> input;
  std::vector<TokenId> target;
  PrivacyMask mask;  // same length as target

  std::vector<TokenId> sequence() const;
  std::size_t length() const { return 1 + input.size() + target.size(); }
};

// Pairs `code` with `doc`; the mask marks tokens of spans in `classes`.
TrainingPair make_training_pair(const Document& doc, const ControlCode& code, const Vocabulary& vocab,
                                ClassSet classes);

struct ObjectiveOptions {
  LossWeights weights;
  ContrastiveSign sign = ContrastiveSign::AS_WRITTEN;
  bool mask_lm = false;
};

struct ObjectiveResult {
  LossComponents components;  // batch means
  double total = 0.0;
  ClampStats clamps;
  Matrix prefix_grad;  // d total / d prefix
};

// Full objective over a batch (per-sequence sums, batch mean) and its exact
// gradient with respect to the prefix. Base parameters are never touched.
ObjectiveResult evaluate_objective(const LmParams& base, const PrefixParams& prefix,
                                   std::span<const TrainingPair> batch, const ObjectiveOptions& options,
                                   bool with_gradient = true);

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  LossComponents components;
  double total = 0.0;
};

struct TrainResult {
  PrefixParams prefix;
  std::vector<EpochStats> trace;
  ClampStats clamps;
};

// Adam on the prefix only (beta1 0.9, beta2 0.999, eps 1e-8) with global
// gradient-norm clipping. Pairs are reshuffled every epoch.
TrainResult train_prefix(std::span<const TrainingPair> pairs, const LmParams& base, const TrainConfig& config,
                         const LossWeights& weights);

nlohmann::json training_report(const TrainResult& result, const TrainConfig& config, const LossWeights& weights);

// Full-parameter language-model training on BOS-prefixed sequences; every
// token after BOS is a target.
struct LmTrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 3e-3;
  std::size_t batch_size = 8;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LmTrainResult {
  LmParams params;
  std::vector<double> epoch_loss;  // mean per-sequence loss
};

LmTrainResult train_lm(const LmParams& init, const std::vector<std::vector<TokenId>>& sequences,
                       const LmTrainConfig& config);

}  // namespace hipsgen

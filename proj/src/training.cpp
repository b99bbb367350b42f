#include "hipsgen/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hipsgen/rng.hpp"

namespace hipsgen {

PrivacyMask build_mask(const TokenizedDocument& tdoc, const std::vector<EntitySpan>& spans, ClassSet classes) {
  PrivacyMask mask(tdoc.ids.size(), 1);
  for (std::size_t t = 0; t < tdoc.offsets.size(); ++t) {
    const auto [s, e] = tdoc.offsets[t];
    for (const auto& span : spans) {
      if (!classes.contains(span.identifier_class)) continue;
      if (s < span.end && span.start < e) {
        mask[t] = 0;
        break;
      }
    }
  }
  return mask;
}

std::string_view to_string(ContrastiveSign s) { return s == ContrastiveSign::AS_WRITTEN ? "as_written" : "negated"; }

std::optional<ContrastiveSign> parse_contrastive_sign(std::string_view text) {
  if (text == "as_written") return ContrastiveSign::AS_WRITTEN;
  if (text == "negated") return ContrastiveSign::NEGATED;
  return std::nullopt;
}

void LossWeights::validate() const {
  for (double w : {lm, contrastive, kl}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw TrainingError("loss weights must be finite and non-negative");
  }
}

ClampStats& ClampStats::operator+=(const ClampStats& o) {
  lm_clamped += o.lm_clamped;
  contrastive_clamped += o.contrastive_clamped;
  contrastive_skipped += o.contrastive_skipped;
  kl_clamped += o.kl_clamped;
  return *this;
}

LossComponents& LossComponents::operator+=(const LossComponents& o) {
  lm += o.lm;
  contrastive += o.contrastive;
  kl += o.kl;
  return *this;
}

namespace {

void check_rows(const Matrix& p, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(p.rows()) != n) {
    throw TrainingError(std::string(what) + ": distribution rows do not match the target count");
  }
}

double safe_log(double p, std::size_t& counter) {
  if (p < kProbFloor) {
    ++counter;
    return std::log(kProbFloor);
  }
  return std::log(p);
}

}  // namespace

double lm_loss(const Matrix& p_theta, std::span<const TokenId> targets, ClampStats* stats, const PrivacyMask* mask) {
  check_rows(p_theta, targets.size(), "lm_loss");
  ClampStats local;
  double loss = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (mask && (*mask)[t] == 0) continue;
    loss -= safe_log(p_theta(static_cast<Eigen::Index>(t), targets[t]), local.lm_clamped);
  }
  if (stats) *stats += local;
  return loss;
}

double contrastive_loss(const Matrix& p_theta, const Matrix& p_base, std::span<const TokenId> targets,
                        const PrivacyMask& mask, ContrastiveSign sign, ClampStats* stats) {
  check_rows(p_theta, targets.size(), "contrastive_loss");
  check_rows(p_base, targets.size(), "contrastive_loss");
  if (mask.size() != targets.size()) throw TrainingError("contrastive_loss: mask length does not match targets");
  ClampStats local;
  double loss = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (mask[t] != 0) continue;
    const auto r = static_cast<Eigen::Index>(t);
    const double pt = p_theta(r, targets[t]);
    const double pb = p_base(r, targets[t]);
    if (pt + pb <= 0.0) {
      ++local.contrastive_skipped;
      continue;
    }
    const double term = -safe_log(pt / (pt + pb), local.contrastive_clamped);
    loss += sign == ContrastiveSign::AS_WRITTEN ? term : -term;
  }
  if (stats) *stats += local;
  return loss;
}

double kl_loss(const Matrix& p_theta, const Matrix& p_base, const PrivacyMask& mask, ClampStats* stats) {
  check_rows(p_theta, mask.size(), "kl_loss");
  check_rows(p_base, mask.size(), "kl_loss");
  ClampStats local;
  double loss = 0.0;
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (mask[t] == 0) continue;
    const auto r = static_cast<Eigen::Index>(t);
    for (Eigen::Index v = 0; v < p_base.cols(); ++v) {
      const double pb = p_base(r, v);
      if (pb <= 0.0) continue;
      loss += pb * (std::log(pb) - safe_log(p_theta(r, v), local.kl_clamped));
    }
  }
  if (stats) *stats += local;
  return loss;
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  return w.lm * c.lm + w.contrastive * c.contrastive + w.kl * c.kl;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw TrainingError("epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw TrainingError("learning rate must be positive");
  if (batch_size == 0) throw TrainingError("batch size must be at least 1");
  if (!(clip_norm > 0.0)) throw TrainingError("gradient clip norm must be positive");
  if (n_virtual == 0) throw TrainingError("n_virtual must be at least 1");
}

void LmTrainConfig::validate() const {
  if (epochs == 0) throw TrainingError("epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw TrainingError("learning rate must be positive");
  if (batch_size == 0) throw TrainingError("batch size must be at least 1");
  if (!(clip_norm > 0.0)) throw TrainingError("gradient clip norm must be positive");
}

std::vector<TokenId> TrainingPair::sequence() const {
  std::vector<TokenId> seq;
  seq.reserve(length());
  seq.push_back(kBos);
  seq.insert(seq.end(), input.begin(), input.end());
  seq.insert(seq.end(), target.begin(), target.end());
  return seq;
}

TrainingPair make_training_pair(const Document& doc, const ControlCode& code, const Vocabulary& vocab,
                                ClassSet classes) {
  TrainingPair pair;
  pair.id = doc.id;
  pair.input = tokenize_ids(render(code), vocab);
  const auto tdoc = tokenize(doc.text, vocab);
  pair.target = tdoc.ids;
  pair.target.push_back(kEos);
  pair.mask = build_mask(tdoc, doc.spans, classes);
  pair.mask.push_back(1);
  return pair;
}

namespace {

// Loss and d loss / d logits for one pair. Rows of the returned gradient
// follow the target positions.
struct PairEval {
  LossComponents components;
  Matrix dlogits;  // rows = sequence length, only target rows non-zero
};

PairEval eval_pair(const LmParams& base, const PrefixParams& prefix, const TrainingPair& pair,
                   const ObjectiveOptions& opt, const ForwardCache& cache, ClampStats& clamps) {
  const auto n_tgt = static_cast<Eigen::Index>(pair.target.size());
  const auto first = static_cast<Eigen::Index>(pair.input.size());  // row predicting target[0]
  const Matrix p_theta = softmax_rows(cache.logits.middleRows(first, n_tgt));
  const auto seq = pair.sequence();
  const bool need_base = opt.weights.contrastive != 0.0 || opt.weights.kl != 0.0;
  Matrix p_base;
  if (need_base) {
    p_base = softmax_rows(forward(base, nullptr, seq).middleRows(first, n_tgt));
  }
  (void)prefix;

  PairEval out;
  const PrivacyMask* lm_mask = opt.mask_lm ? &pair.mask : nullptr;
  if (opt.weights.lm != 0.0) out.components.lm = lm_loss(p_theta, pair.target, &clamps, lm_mask);
  if (opt.weights.contrastive != 0.0) {
    out.components.contrastive = contrastive_loss(p_theta, p_base, pair.target, pair.mask, opt.sign, &clamps);
  }
  if (opt.weights.kl != 0.0) out.components.kl = kl_loss(p_theta, p_base, pair.mask, &clamps);

  Matrix dz = Matrix::Zero(n_tgt, p_theta.cols());
  for (Eigen::Index t = 0; t < n_tgt; ++t) {
    const auto y = pair.target[static_cast<std::size_t>(t)];
    const bool priv = pair.mask[static_cast<std::size_t>(t)] == 0;
    if (opt.weights.lm != 0.0 && !(opt.mask_lm && priv) && p_theta(t, y) >= kProbFloor) {
      RowVector g = p_theta.row(t);
      g(y) -= 1.0;
      dz.row(t) += opt.weights.lm * g;
    }
    if (opt.weights.contrastive != 0.0 && priv) {
      const double pt = p_theta(t, y);
      const double pb = p_base(t, y);
      if (pt + pb > 0.0 && pt / (pt + pb) >= kProbFloor) {
        // d/dz [-ln(pt / (pt + pb))] = -(pb / (pt + pb)) (onehot - p)
        const double coef = pb / (pt + pb) * (opt.sign == ContrastiveSign::AS_WRITTEN ? 1.0 : -1.0);
        RowVector g = p_theta.row(t) * coef;
        g(y) -= coef;
        dz.row(t) += opt.weights.contrastive * g;
      }
    }
    if (opt.weights.kl != 0.0 && !priv) {
      // Clamped entries are constant in the loss and drop out of the gradient.
      double live = 0.0;
      RowVector g = RowVector::Zero(p_theta.cols());
      for (Eigen::Index v = 0; v < p_theta.cols(); ++v) {
        if (p_base(t, v) > 0.0 && p_theta(t, v) >= kProbFloor) {
          live += p_base(t, v);
          g(v) = -p_base(t, v);
        }
      }
      g += live * p_theta.row(t);
      dz.row(t) += opt.weights.kl * g;
    }
  }
  out.dlogits = Matrix::Zero(cache.logits.rows(), cache.logits.cols());
  out.dlogits.middleRows(first, n_tgt) = dz;
  return out;
}

}  // namespace

ObjectiveResult evaluate_objective(const LmParams& base, const PrefixParams& prefix,
                                   std::span<const TrainingPair> batch, const ObjectiveOptions& options,
                                   bool with_gradient) {
  if (batch.empty()) throw TrainingError("objective needs a non-empty batch");
  options.weights.validate();
  ObjectiveResult res;
  res.prefix_grad = Matrix::Zero(prefix.emb.rows(), prefix.emb.cols());
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& pair : batch) {
    if (pair.mask.size() != pair.target.size()) throw TrainingError("pair " + pair.id + ": mask length mismatch");
    const auto seq = pair.sequence();
    const auto cache = forward_cached(base, &prefix, seq);
    const auto ev = eval_pair(base, prefix, pair, options, cache, res.clamps);
    res.components += ev.components.scaled(inv);
    if (with_gradient) {
      Matrix g = Matrix::Zero(prefix.emb.rows(), prefix.emb.cols());
      backward(base, &prefix, cache, ev.dlogits, nullptr, &g);
      res.prefix_grad += g * inv;
    }
  }
  res.total = total_loss(res.components, options.weights);
  return res;
}

namespace {

struct Adam {
  std::vector<double> m, v;
  std::size_t t = 0;

  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  // Updates `x` in place from gradient `g` (same length).
  void step(std::span<double> x, std::span<const double> g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

void clip(std::span<double> g, double max_norm) {
  double sq = 0.0;
  for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (double& x : g) x *= f;
  }
}

bool finite(std::span<const double> g) {
  return std::all_of(g.begin(), g.end(), [](double x) { return std::isfinite(x); });
}

std::string trace_text(const std::vector<EpochStats>& trace) {
  std::string s;
  for (const auto& e : trace) s += " epoch " + std::to_string(e.epoch) + ": " + std::to_string(e.total) + ";";
  return s.empty() ? " (no completed epochs)" : s;
}

}  // namespace

TrainResult train_prefix(std::span<const TrainingPair> pairs, const LmParams& base, const TrainConfig& config,
                         const LossWeights& weights) {
  config.validate();
  weights.validate();
  if (pairs.empty()) throw TrainingError("train_prefix needs at least one training pair");
  const std::size_t room = base.dims.context_len - std::min(base.dims.context_len, config.n_virtual);
  for (const auto& p : pairs) {
    if (p.length() > room) {
      throw TrainingError("training pair " + p.id + " has " + std::to_string(p.length()) +
                          " tokens, more than the " + std::to_string(room) + " available");
    }
  }

  TrainResult res;
  res.prefix = init_prefix(derive_seed(config.seed, 1), config.n_virtual, base.dims.d_model);
  SeededRng order_rng(derive_seed(config.seed, 2));
  ObjectiveOptions opt{weights, config.contrastive_sign, config.mask_lm};
  Adam adam(static_cast<std::size_t>(res.prefix.emb.size()));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order);
    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<TrainingPair> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        batch.push_back(pairs[order[i]]);
      }
      auto obj = evaluate_objective(base, res.prefix, batch, opt);
      res.clamps += obj.clamps;
      if (!std::isfinite(obj.total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ";" + trace_text(res.trace));
      }
      std::span<double> g(obj.prefix_grad.data(), static_cast<std::size_t>(obj.prefix_grad.size()));
      if (!finite(g)) {
        throw TrainingError("non-finite prefix gradient at epoch " + std::to_string(epoch) + ";" +
                            trace_text(res.trace));
      }
      clip(g, config.clip_norm);
      adam.step(std::span<double>(res.prefix.emb.data(), static_cast<std::size_t>(res.prefix.emb.size())), g,
                config.learning_rate);
      quantize_to_float32(res.prefix);
      stats.components += obj.components;
      stats.total += obj.total;
      ++stats.steps;
    }
    const double inv = 1.0 / static_cast<double>(stats.steps);
    stats.components = stats.components.scaled(inv);
    stats.total *= inv;
    res.trace.push_back(stats);
  }
  return res;
}

nlohmann::json training_report(const TrainResult& result, const TrainConfig& config, const LossWeights& weights) {
  nlohmann::json j;
  j["seed"] = config.seed;
  j["config"] = {{"epochs", config.epochs},
                 {"learning_rate", config.learning_rate},
                 {"batch_size", config.batch_size},
                 {"clip_norm", config.clip_norm},
                 {"contrastive_sign", std::string(to_string(config.contrastive_sign))},
                 {"mask_lm", config.mask_lm},
                 {"n_virtual", config.n_virtual},
                 {"reduction", "per-sequence sum, batch mean"},
                 {"optimizer", "adam(0.9, 0.999, 1e-8)"}};
  j["weights"] = {{"lm", weights.lm}, {"contrastive", weights.contrastive}, {"kl", weights.kl}};
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : result.trace) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"steps", e.steps},
                           {"total", e.total},
                           {"lm", e.components.lm},
                           {"contrastive", e.components.contrastive},
                           {"kl", e.components.kl}});
  }
  j["clamps"] = {{"lm", result.clamps.lm_clamped},
                 {"contrastive", result.clamps.contrastive_clamped},
                 {"contrastive_skipped", result.clamps.contrastive_skipped},
                 {"kl", result.clamps.kl_clamped}};
  return j;
}

LmTrainResult train_lm(const LmParams& init, const std::vector<std::vector<TokenId>>& sequences,
                       const LmTrainConfig& config) {
  config.validate();
  if (sequences.empty()) throw TrainingError("train_lm needs at least one sequence");
  for (const auto& s : sequences) {
    if (s.size() < 2) throw TrainingError("train_lm sequences need at least two tokens");
    if (s.size() > init.dims.context_len) throw TrainingError("train_lm sequence exceeds the context length");
  }
  LmTrainResult res;
  res.params = init;
  Adam adam(init.parameter_count());
  SeededRng order_rng(derive_seed(config.seed, 3));
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> flat_grad(init.parameter_count());
  std::vector<double> flat_params(init.parameter_count());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      auto grads = LmParams::zeros(init.dims);
      for (std::size_t i = start; i < end; ++i) {
        const auto& seq = sequences[order[i]];
        const std::span<const TokenId> input(seq.data(), seq.size() - 1);
        const auto cache = forward_cached(res.params, nullptr, input);
        Matrix dz = softmax_rows(cache.logits);
        for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
          const auto r = static_cast<Eigen::Index>(t);
          epoch_loss -= std::log(std::max(dz(r, seq[t + 1]), kProbFloor));
          dz(r, seq[t + 1]) -= 1.0;
        }
        dz *= inv;
        backward(res.params, nullptr, cache, dz, &grads, nullptr);
      }
      std::size_t k = 0;
      grads.for_each_tensor([&](std::span<const double> s) {
        for (double x : s) flat_grad[k++] = x;
      });
      if (!finite(flat_grad)) throw TrainingError("non-finite gradient while training the language model");
      clip(flat_grad, config.clip_norm);
      k = 0;
      res.params.for_each_tensor([&](std::span<const double> s) {
        for (double x : s) flat_params[k++] = x;
      });
      adam.step(flat_params, flat_grad, config.learning_rate);
      k = 0;
      res.params.for_each_tensor([&](std::span<double> s) {
        for (double& x : s) x = flat_params[k++];
      });
      quantize_to_float32(res.params);
    }
    res.epoch_loss.push_back(epoch_loss / static_cast<double>(sequences.size()));
  }
  return res;
}

}  // namespace hipsgen

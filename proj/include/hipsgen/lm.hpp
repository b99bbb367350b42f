#pragma once

// Single-block causal transformer used as the frozen base model, plus the
// trainable virtual-token prefix prepended to its input embeddings.
//
// Layout (row vectors, x * W):
//   x0 = embed(token) + pos           (prefix rows: prefix_i + pos_i)
//   x1 = x0 + Attn(LN1(x0))           single head, causal
//   x2 = x1 + W2 gelu(LN2(x1) W1 + b1) + b2
//   logits = x2 * E^T                 output tied to the token embedding
//
// Parameters are held in double precision but always carry float32-exact
// values so that the on-disk float32 format round-trips bit-for-bit.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "hipsgen/tokenizer.hpp"

namespace hipsgen {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

struct LmError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LmDims {
  std::size_t vocab = 0;
  std::size_t d_model = 64;
  std::size_t context_len = 192;

  bool operator==(const LmDims&) const = default;
};

inline constexpr std::size_t kDefaultVirtualTokens = 20;
inline constexpr double kInitStd = 0.02;

struct LmParams {
  LmDims dims;
  std::uint64_t seed = 0;

  Matrix tok_emb;  // vocab x d
  Matrix pos_emb;  // context_len x d
  RowVector ln1_g, ln1_b;
  Matrix wq, wk, wv, wo;  // d x d
  RowVector ln2_g, ln2_b;
  Matrix w1;  // d x 4d
  RowVector b1;
  Matrix w2;  // 4d x d
  RowVector b2;

  // Zero-valued tensors with the shapes implied by `dims`.
  static LmParams zeros(const LmDims& dims);

  // Visits every tensor in serialization order as a flat span.
  template <typename F>
  void for_each_tensor(F&& f) {
    f(std::span<double>(tok_emb.data(), static_cast<std::size_t>(tok_emb.size())));
    f(std::span<double>(pos_emb.data(), static_cast<std::size_t>(pos_emb.size())));
    for (auto* v : {&ln1_g, &ln1_b}) f(std::span<double>(v->data(), static_cast<std::size_t>(v->size())));
    for (auto* m : {&wq, &wk, &wv, &wo}) f(std::span<double>(m->data(), static_cast<std::size_t>(m->size())));
    for (auto* v : {&ln2_g, &ln2_b}) f(std::span<double>(v->data(), static_cast<std::size_t>(v->size())));
    f(std::span<double>(w1.data(), static_cast<std::size_t>(w1.size())));
    f(std::span<double>(b1.data(), static_cast<std::size_t>(b1.size())));
    f(std::span<double>(w2.data(), static_cast<std::size_t>(w2.size())));
    f(std::span<double>(b2.data(), static_cast<std::size_t>(b2.size())));
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<LmParams*>(this)->for_each_tensor([&](std::span<double> s) { f(std::span<const double>(s)); });
  }

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const LmParams& other) const;
};

struct PrefixParams {
  Matrix emb;  // n_virtual x d
  std::uint64_t seed = 0;

  std::size_t n_virtual() const { return static_cast<std::size_t>(emb.rows()); }
  bool operator==(const PrefixParams& other) const { return seed == other.seed && emb == other.emb; }
};

// Normal(0, 0.02) weights, unit layer-norm gains, zero biases.
LmParams init_params(std::uint64_t seed, const LmDims& dims);
PrefixParams init_prefix(std::uint64_t seed, std::size_t n_virtual, std::size_t d_model);

// Rounds every value to the nearest float32.
void quantize_to_float32(LmParams& params);
void quantize_to_float32(PrefixParams& prefix);

// Intermediate activations of one forward pass, kept for backpropagation.
struct ForwardCache {
  std::size_t n_prefix = 0;
  std::vector<TokenId> tokens;
  Matrix x0, xhat1, a, q, k, v, p, h, x1, xhat2, b, f1, g, x2;
  RowVector rstd1, rstd2;
  Matrix logits;  // one row per token position
};

ForwardCache forward_cached(const LmParams& params, const PrefixParams* prefix, std::span<const TokenId> tokens);

// Row t holds the next-token logits after the prefix and tokens[0..t].
// Throws LmError when prefix + tokens exceed the context length.
Matrix forward(const LmParams& params, const PrefixParams* prefix, std::span<const TokenId> tokens);

// Softmax of the final-position logits.
std::vector<double> next_token_dist(const LmParams& params, const PrefixParams* prefix,
                                    std::span<const TokenId> context);

Matrix softmax_rows(const Matrix& logits);
std::vector<double> softmax(std::span<const double> logits);

// Backpropagates dL/dlogits through the network. Gradients are accumulated
// into `base_grads` (shaped like the params) and `prefix_grad` when given.
void backward(const LmParams& params, const PrefixParams* prefix, const ForwardCache& cache, const Matrix& dlogits,
              LmParams* base_grads, Matrix* prefix_grad);

// Key/value-cached decoding; push() returns the logits at the new position
// and agrees with forward() up to floating-point reassociation.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const LmParams& params, const PrefixParams* prefix);

  RowVector push(TokenId token);
  std::size_t length() const { return length_; }
  std::size_t capacity() const { return params_.dims.context_len; }

 private:
  RowVector step(const RowVector& embedding);

  const LmParams& params_;
  Matrix keys_;
  Matrix values_;
  std::size_t length_ = 0;
};

// Binary format, little-endian:
//   char[4] "HPLM", u32 version, u32 vocab, u32 d_model, u32 context_len,
//   u32 n_virtual (0 for base weights), u64 seed, then float32 tensors in
//   for_each_tensor order (base) or the n_virtual x d prefix matrix.
inline constexpr std::uint32_t kParamFormatVersion = 1;

void save_params(const LmParams& params, const std::filesystem::path& path);
LmParams load_params(const std::filesystem::path& path, std::optional<LmDims> expected = std::nullopt);
void save_prefix(const PrefixParams& prefix, const LmDims& dims, const std::filesystem::path& path);
PrefixParams load_prefix(const std::filesystem::path& path, const LmDims& expected,
                         std::optional<std::size_t> expected_n_virtual = std::nullopt);

}  // namespace hipsgen

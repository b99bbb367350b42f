#include "hipsgen/lm.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

#include "hipsgen/rng.hpp"

namespace hipsgen {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(u);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

// Row-wise layer norm. Writes the normalized rows and reciprocal std.
void layer_norm(const Matrix& x, const RowVector& g, const RowVector& b, Matrix& xhat, RowVector& rstd, Matrix& y) {
  const auto n = x.rows();
  const auto d = static_cast<double>(x.cols());
  xhat.resize(n, x.cols());
  y.resize(n, x.cols());
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).sum() / d;
    const double var = (x.row(i).array() - mean).square().sum() / d;
    rstd(i) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
    y.row(i) = xhat.row(i).cwiseProduct(g) + b;
  }
}

RowVector layer_norm_row(const RowVector& x, const RowVector& g, const RowVector& b) {
  const auto d = static_cast<double>(x.size());
  const double mean = x.sum() / d;
  const double var = (x.array() - mean).square().sum() / d;
  const double r = 1.0 / std::sqrt(var + kLnEps);
  return ((x.array() - mean) * r).matrix().cwiseProduct(g) + b;
}

// dy -> dx for a row-wise layer norm; accumulates gain/bias gradients.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const RowVector& rstd, const RowVector& g,
                           RowVector* dg, RowVector* db) {
  if (dg) *dg += dy.cwiseProduct(xhat).colwise().sum();
  if (db) *db += dy.colwise().sum();
  Matrix dx(dy.rows(), dy.cols());
  const auto d = static_cast<double>(dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const RowVector dxhat = dy.row(i).cwiseProduct(g);
    const double mean_dxhat = dxhat.sum() / d;
    const double mean_dxhat_xhat = dxhat.cwiseProduct(xhat.row(i)).sum() / d;
    dx.row(i) = rstd(i) * (dxhat.array() - mean_dxhat - xhat.row(i).array() * mean_dxhat_xhat).matrix();
  }
  return dx;
}

void fill_normal(Matrix& m, RandomSource& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, kInitStd);
}

void check_dims(const LmDims& dims, std::size_t n_virtual = 0) {
  if (dims.vocab < kReservedCount) throw LmError("vocabulary size must be at least 5");
  if (dims.d_model < 8) throw LmError("d_model must be at least 8");
  if (dims.context_len < n_virtual + 2) throw LmError("context_len must be at least n_virtual + 2");
}

}  // namespace

LmParams LmParams::zeros(const LmDims& dims) {
  LmParams p;
  p.dims = dims;
  const auto V = static_cast<Eigen::Index>(dims.vocab);
  const auto d = static_cast<Eigen::Index>(dims.d_model);
  const auto C = static_cast<Eigen::Index>(dims.context_len);
  p.tok_emb = Matrix::Zero(V, d);
  p.pos_emb = Matrix::Zero(C, d);
  p.ln1_g = RowVector::Zero(d);
  p.ln1_b = RowVector::Zero(d);
  p.wq = Matrix::Zero(d, d);
  p.wk = Matrix::Zero(d, d);
  p.wv = Matrix::Zero(d, d);
  p.wo = Matrix::Zero(d, d);
  p.ln2_g = RowVector::Zero(d);
  p.ln2_b = RowVector::Zero(d);
  p.w1 = Matrix::Zero(d, 4 * d);
  p.b1 = RowVector::Zero(4 * d);
  p.w2 = Matrix::Zero(4 * d, d);
  p.b2 = RowVector::Zero(d);
  return p;
}

std::size_t LmParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](std::span<const double> s) { n += s.size(); });
  return n;
}

bool LmParams::all_finite() const {
  bool ok = true;
  for_each_tensor([&](std::span<const double> s) {
    for (double v : s) ok = ok && std::isfinite(v);
  });
  return ok;
}

bool LmParams::operator==(const LmParams& other) const {
  if (!(dims == other.dims) || seed != other.seed) return false;
  std::vector<std::span<const double>> mine;
  std::vector<std::span<const double>> theirs;
  for_each_tensor([&](std::span<const double> s) { mine.push_back(s); });
  other.for_each_tensor([&](std::span<const double> s) { theirs.push_back(s); });
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].size() != theirs[i].size()) return false;
    if (std::memcmp(mine[i].data(), theirs[i].data(), mine[i].size() * sizeof(double)) != 0) return false;
  }
  return true;
}

LmParams init_params(std::uint64_t seed, const LmDims& dims) {
  check_dims(dims);
  SeededRng rng(seed);
  auto p = LmParams::zeros(dims);
  p.seed = seed;
  for (auto* m : {&p.tok_emb, &p.pos_emb, &p.wq, &p.wk, &p.wv, &p.wo, &p.w1, &p.w2}) fill_normal(*m, rng);
  p.ln1_g.setOnes();
  p.ln2_g.setOnes();
  quantize_to_float32(p);
  return p;
}

PrefixParams init_prefix(std::uint64_t seed, std::size_t n_virtual, std::size_t d_model) {
  if (n_virtual == 0) throw LmError("prefix needs at least one virtual token");
  SeededRng rng(seed);
  PrefixParams p;
  p.seed = seed;
  p.emb = Matrix::Zero(static_cast<Eigen::Index>(n_virtual), static_cast<Eigen::Index>(d_model));
  fill_normal(p.emb, rng);
  quantize_to_float32(p);
  return p;
}

void quantize_to_float32(LmParams& params) {
  params.for_each_tensor([](std::span<double> s) {
    for (double& v : s) v = static_cast<double>(static_cast<float>(v));
  });
}

void quantize_to_float32(PrefixParams& prefix) {
  for (Eigen::Index i = 0; i < prefix.emb.size(); ++i) {
    prefix.emb.data()[i] = static_cast<double>(static_cast<float>(prefix.emb.data()[i]));
  }
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  double m = -std::numeric_limits<double>::infinity();
  for (double l : logits) m = std::max(m, l);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::isinf(logits[i]) && logits[i] < 0 ? 0.0 : std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

ForwardCache forward_cached(const LmParams& params, const PrefixParams* prefix, std::span<const TokenId> tokens) {
  const auto& dims = params.dims;
  const std::size_t n_prefix = prefix ? prefix->n_virtual() : 0;
  const std::size_t T = n_prefix + tokens.size();
  if (T > dims.context_len) {
    throw LmError("sequence of " + std::to_string(tokens.size()) + " tokens plus " + std::to_string(n_prefix) +
                  " virtual tokens exceeds context length " + std::to_string(dims.context_len));
  }
  if (prefix && static_cast<std::size_t>(prefix->emb.cols()) != dims.d_model) {
    throw LmError("prefix width does not match d_model");
  }
  const auto d = static_cast<Eigen::Index>(dims.d_model);
  const auto Ti = static_cast<Eigen::Index>(T);

  ForwardCache c;
  c.n_prefix = n_prefix;
  c.tokens.assign(tokens.begin(), tokens.end());
  c.x0.resize(Ti, d);
  for (std::size_t i = 0; i < n_prefix; ++i) {
    c.x0.row(static_cast<Eigen::Index>(i)) = prefix->emb.row(static_cast<Eigen::Index>(i));
  }
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    const auto tok = tokens[j];
    if (tok < 0 || static_cast<std::size_t>(tok) >= dims.vocab) throw LmError("token id outside vocabulary");
    c.x0.row(static_cast<Eigen::Index>(n_prefix + j)) = params.tok_emb.row(tok);
  }
  c.x0 += params.pos_emb.topRows(Ti);

  layer_norm(c.x0, params.ln1_g, params.ln1_b, c.xhat1, c.rstd1, c.a);
  c.q = c.a * params.wq;
  c.k = c.a * params.wk;
  c.v = c.a * params.wv;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix s = (c.q * c.k.transpose()) * scale;
  c.p = Matrix::Zero(Ti, Ti);
  for (Eigen::Index i = 0; i < Ti; ++i) {
    const double m = s.row(i).head(i + 1).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j <= i; ++j) {
      c.p(i, j) = std::exp(s(i, j) - m);
      sum += c.p(i, j);
    }
    c.p.row(i).head(i + 1) /= sum;
  }
  c.h = c.p * c.v;
  c.x1 = c.x0 + c.h * params.wo;

  layer_norm(c.x1, params.ln2_g, params.ln2_b, c.xhat2, c.rstd2, c.b);
  c.f1 = (c.b * params.w1).rowwise() + params.b1;
  c.g = c.f1.unaryExpr([](double x) { return gelu(x); });
  c.x2 = c.x1 + ((c.g * params.w2).rowwise() + params.b2);

  const auto n_tok = static_cast<Eigen::Index>(tokens.size());
  c.logits = c.x2.bottomRows(n_tok) * params.tok_emb.transpose();
  return c;
}

Matrix forward(const LmParams& params, const PrefixParams* prefix, std::span<const TokenId> tokens) {
  return forward_cached(params, prefix, tokens).logits;
}

std::vector<double> next_token_dist(const LmParams& params, const PrefixParams* prefix,
                                    std::span<const TokenId> context) {
  if (context.empty()) throw LmError("next_token_dist needs a non-empty context");
  const Matrix logits = forward(params, prefix, context);
  const RowVector last = logits.row(logits.rows() - 1);
  return softmax(std::span<const double>(last.data(), static_cast<std::size_t>(last.size())));
}

void backward(const LmParams& params, const PrefixParams* prefix, const ForwardCache& c, const Matrix& dlogits,
              LmParams* g, Matrix* prefix_grad) {
  const auto T = c.x0.rows();
  const auto d = c.x0.cols();
  const auto n_tok = static_cast<Eigen::Index>(c.tokens.size());
  if (dlogits.rows() != n_tok || dlogits.cols() != static_cast<Eigen::Index>(params.dims.vocab)) {
    throw LmError("dlogits shape does not match the forward pass");
  }

  Matrix dx2 = Matrix::Zero(T, d);
  dx2.bottomRows(n_tok) = dlogits * params.tok_emb;
  if (g) g->tok_emb += dlogits.transpose() * c.x2.bottomRows(n_tok);

  // Feed-forward branch.
  if (g) {
    g->w2 += c.g.transpose() * dx2;
    g->b2 += dx2.colwise().sum();
  }
  Matrix df1 = dx2 * params.w2.transpose();
  for (Eigen::Index i = 0; i < df1.size(); ++i) df1.data()[i] *= gelu_grad(c.f1.data()[i]);
  if (g) {
    g->w1 += c.b.transpose() * df1;
    g->b1 += df1.colwise().sum();
  }
  const Matrix db = df1 * params.w1.transpose();
  Matrix dx1 = layer_norm_backward(db, c.xhat2, c.rstd2, params.ln2_g, g ? &g->ln2_g : nullptr,
                                   g ? &g->ln2_b : nullptr);
  dx1 += dx2;

  // Attention branch.
  if (g) g->wo += c.h.transpose() * dx1;
  const Matrix dh = dx1 * params.wo.transpose();
  const Matrix dp = dh * c.v.transpose();
  const Matrix dv = c.p.transpose() * dh;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix ds(T, T);
  for (Eigen::Index i = 0; i < T; ++i) {
    const double dot = dp.row(i).dot(c.p.row(i));
    ds.row(i) = c.p.row(i).cwiseProduct((dp.row(i).array() - dot).matrix()) * scale;
  }
  const Matrix dq = ds * c.k;
  const Matrix dk = ds.transpose() * c.q;
  if (g) {
    g->wq += c.a.transpose() * dq;
    g->wk += c.a.transpose() * dk;
    g->wv += c.a.transpose() * dv;
  }
  const Matrix da = dq * params.wq.transpose() + dk * params.wk.transpose() + dv * params.wv.transpose();
  Matrix dx0 = layer_norm_backward(da, c.xhat1, c.rstd1, params.ln1_g, g ? &g->ln1_g : nullptr,
                                   g ? &g->ln1_b : nullptr);
  dx0 += dx1;

  const auto n_prefix = static_cast<Eigen::Index>(c.n_prefix);
  if (prefix_grad && prefix) *prefix_grad += dx0.topRows(n_prefix);
  if (g) {
    g->pos_emb.topRows(T) += dx0;
    for (Eigen::Index j = 0; j < n_tok; ++j) g->tok_emb.row(c.tokens[static_cast<std::size_t>(j)]) += dx0.row(n_prefix + j);
  }
}

IncrementalDecoder::IncrementalDecoder(const LmParams& params, const PrefixParams* prefix) : params_(params) {
  const auto C = static_cast<Eigen::Index>(params.dims.context_len);
  const auto d = static_cast<Eigen::Index>(params.dims.d_model);
  keys_ = Matrix::Zero(C, d);
  values_ = Matrix::Zero(C, d);
  if (prefix) {
    if (prefix->n_virtual() >= params.dims.context_len) throw LmError("prefix fills the whole context");
    for (Eigen::Index i = 0; i < prefix->emb.rows(); ++i) step(prefix->emb.row(i));
  }
}

RowVector IncrementalDecoder::push(TokenId token) {
  if (token < 0 || static_cast<std::size_t>(token) >= params_.dims.vocab) throw LmError("token id outside vocabulary");
  return step(params_.tok_emb.row(token));
}

RowVector IncrementalDecoder::step(const RowVector& embedding) {
  if (length_ >= params_.dims.context_len) {
    throw LmError("incremental decoding exceeded context length " + std::to_string(params_.dims.context_len));
  }
  const auto t = static_cast<Eigen::Index>(length_);
  const RowVector x0 = embedding + params_.pos_emb.row(t);
  const RowVector a = layer_norm_row(x0, params_.ln1_g, params_.ln1_b);
  const RowVector q = a * params_.wq;
  keys_.row(t) = a * params_.wk;
  values_.row(t) = a * params_.wv;
  const double scale = 1.0 / std::sqrt(static_cast<double>(params_.dims.d_model));
  Eigen::VectorXd s = (keys_.topRows(t + 1) * q.transpose()) * scale;
  const double m = s.maxCoeff();
  s = (s.array() - m).exp();
  s /= s.sum();
  const RowVector h = s.transpose() * values_.topRows(t + 1);
  const RowVector x1 = x0 + h * params_.wo;
  const RowVector b = layer_norm_row(x1, params_.ln2_g, params_.ln2_b);
  const RowVector f1 = b * params_.w1 + params_.b1;
  const RowVector gact = f1.unaryExpr([](double x) { return gelu(x); });
  const RowVector x2 = x1 + gact * params_.w2 + params_.b2;
  ++length_;
  return x2 * params_.tok_emb.transpose();
}

namespace {

constexpr char kMagic[4] = {'H', 'P', 'L', 'M'};
constexpr std::size_t kHeaderBytes = 4 + 4 * 5 + 8;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& buf, double v) { put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  std::string path;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw LmError("corrupt parameter file " + path + ": truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
};

struct Header {
  LmDims dims;
  std::size_t n_virtual = 0;
  std::uint64_t seed = 0;
};

std::string header_bytes(const LmDims& dims, std::size_t n_virtual, std::uint64_t seed) {
  std::string buf(kMagic, 4);
  put_u32(buf, kParamFormatVersion);
  put_u32(buf, static_cast<std::uint32_t>(dims.vocab));
  put_u32(buf, static_cast<std::uint32_t>(dims.d_model));
  put_u32(buf, static_cast<std::uint32_t>(dims.context_len));
  put_u32(buf, static_cast<std::uint32_t>(n_virtual));
  put_u64(buf, seed);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LmError("cannot open parameter file " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Header read_header(Reader& r) {
  r.need(4);
  if (std::memcmp(r.buf.data(), kMagic, 4) != 0) throw LmError("corrupt parameter file " + r.path + ": bad magic");
  r.pos = 4;
  const auto version = r.u32();
  if (version != kParamFormatVersion) {
    throw LmError("parameter file " + r.path + " has format version " + std::to_string(version) + ", expected " +
                  std::to_string(kParamFormatVersion));
  }
  Header h;
  h.dims.vocab = r.u32();
  h.dims.d_model = r.u32();
  h.dims.context_len = r.u32();
  h.n_virtual = r.u32();
  h.seed = r.u64();
  return h;
}

void write_file(const std::filesystem::path& path, const std::string& buf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LmError("cannot write parameter file " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void save_params(const LmParams& params, const std::filesystem::path& path) {
  std::string buf = header_bytes(params.dims, 0, params.seed);
  params.for_each_tensor([&](std::span<const double> s) {
    for (double v : s) put_f32(buf, v);
  });
  write_file(path, buf);
}

LmParams load_params(const std::filesystem::path& path, std::optional<LmDims> expected) {
  const auto buf = read_file(path);
  Reader r{buf, 0, path.string()};
  const auto h = read_header(r);
  if (h.n_virtual != 0) throw LmError("parameter file " + r.path + " holds a prefix, not base weights");
  check_dims(h.dims);
  if (expected && !(*expected == h.dims)) {
    throw LmError("parameter file " + r.path + " has dims (vocab " + std::to_string(h.dims.vocab) + ", d " +
                  std::to_string(h.dims.d_model) + ", context " + std::to_string(h.dims.context_len) +
                  ") which do not match the current configuration (vocab " + std::to_string(expected->vocab) +
                  ", d " + std::to_string(expected->d_model) + ", context " + std::to_string(expected->context_len) +
                  ")");
  }
  auto params = LmParams::zeros(h.dims);
  params.seed = h.seed;
  const std::size_t expected_bytes = kHeaderBytes + params.parameter_count() * 4;
  if (buf.size() != expected_bytes) {
    throw LmError("corrupt parameter file " + r.path + ": size " + std::to_string(buf.size()) + " bytes, expected " +
                  std::to_string(expected_bytes));
  }
  params.for_each_tensor([&](std::span<double> s) {
    for (double& v : s) v = r.f32();
  });
  return params;
}

void save_prefix(const PrefixParams& prefix, const LmDims& dims, const std::filesystem::path& path) {
  if (static_cast<std::size_t>(prefix.emb.cols()) != dims.d_model) throw LmError("prefix width does not match dims");
  std::string buf = header_bytes(dims, prefix.n_virtual(), prefix.seed);
  for (Eigen::Index i = 0; i < prefix.emb.size(); ++i) put_f32(buf, prefix.emb.data()[i]);
  write_file(path, buf);
}

PrefixParams load_prefix(const std::filesystem::path& path, const LmDims& expected,
                         std::optional<std::size_t> expected_n_virtual) {
  const auto buf = read_file(path);
  Reader r{buf, 0, path.string()};
  const auto h = read_header(r);
  if (h.n_virtual == 0) throw LmError("parameter file " + r.path + " holds base weights, not a prefix");
  if (!(h.dims == expected)) throw LmError("prefix file " + r.path + " was trained for different model dims");
  if (expected_n_virtual && *expected_n_virtual != h.n_virtual) {
    throw LmError("prefix file " + r.path + " has " + std::to_string(h.n_virtual) + " virtual tokens, expected " +
                  std::to_string(*expected_n_virtual));
  }
  const std::size_t expected_bytes = kHeaderBytes + h.n_virtual * h.dims.d_model * 4;
  if (buf.size() != expected_bytes) {
    throw LmError("corrupt parameter file " + r.path + ": size " + std::to_string(buf.size()) + " bytes, expected " +
                  std::to_string(expected_bytes));
  }
  PrefixParams p;
  p.seed = h.seed;
  p.emb.resize(static_cast<Eigen::Index>(h.n_virtual), static_cast<Eigen::Index>(h.dims.d_model));
  for (Eigen::Index i = 0; i < p.emb.size(); ++i) p.emb.data()[i] = r.f32();
  return p;
}

}  // namespace hipsgen

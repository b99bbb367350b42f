#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "generators.hpp"
#include "hipsgen/lm.hpp"
#include "oracles.hpp"

using namespace hipsgen;
namespace fs = std::filesystem;

namespace {

const LmDims kSmall{16, 8, 12};

std::vector<TokenId> random_tokens(RandomSource& rng, std::size_t n, std::size_t vocab) {
  std::vector<TokenId> t(n);
  for (auto& x : t) x = static_cast<TokenId>(rng.uniform_index(vocab));
  return t;
}

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST_CASE("init_params") {
  const auto a = init_params(9, kSmall);
  CHECK(a == init_params(9, kSmall));
  CHECK_FALSE(a == init_params(10, kSmall));
  CHECK(a.tok_emb.rows() == 16);
  CHECK(a.tok_emb.cols() == 8);
  CHECK(a.pos_emb.rows() == 12);
  CHECK(a.w1.cols() == 32);
  CHECK(a.ln1_g.isOnes());
  CHECK(a.b1.isZero());
  CHECK(a.all_finite());
  // Values are float32-exact.
  a.for_each_tensor([](std::span<const double> s) {
    for (double x : s) CHECK(static_cast<double>(static_cast<float>(x)) == x);
  });
  CHECK_THROWS_AS(init_params(1, {4, 8, 12}), LmError);
  CHECK_THROWS_AS(init_params(1, {16, 4, 12}), LmError);
  CHECK_THROWS_AS(init_prefix(1, 0, 8), LmError);
  const auto p = init_prefix(3, 20, 8);
  CHECK(p.n_virtual() == 20);
  CHECK(p == init_prefix(3, 20, 8));
}

TEST_CASE("forward examples") {
  SeededRng rng(1);
  const auto params = init_params(4, kSmall);
  const auto prefix = init_prefix(5, 3, 8);

  SUBCASE("empty token list with prefix") { CHECK(forward(params, &prefix, {}).rows() == 0); }

  SUBCASE("zero weights give uniform distributions") {
    auto z = LmParams::zeros(kSmall);
    z.b1.setConstant(0.3);
    z.b2.setConstant(-0.2);
    const std::vector<TokenId> ctx = {2, 7, 9};
    const auto dist = next_token_dist(z, nullptr, ctx);
    for (double p : dist) CHECK(p == doctest::Approx(1.0 / 16).epsilon(1e-12));
  }

  SUBCASE("context overflow") {
    CHECK_THROWS_AS(forward(params, &prefix, random_tokens(rng, 10, 16)), LmError);
    CHECK_NOTHROW(forward(params, &prefix, random_tokens(rng, 9, 16)));
    CHECK_THROWS_AS(forward(params, nullptr, std::vector<TokenId>{16}), LmError);
  }

  SUBCASE("bit-reproducible") {
    const auto t = random_tokens(rng, 9, 16);
    const Matrix a = forward(params, &prefix, t);
    const Matrix b = forward(params, &prefix, t);
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
  }
}

TEST_CASE("next_token_dist examples") {
  SeededRng rng(2);
  const auto params = gen::params(rng, kSmall, 0.5);
  const std::vector<TokenId> ctx = {2, 5, 6};
  const auto dist = next_token_dist(params, nullptr, ctx);
  const Matrix logits = forward(params, nullptr, ctx);
  std::vector<double> last(logits.cols());
  for (Eigen::Index v = 0; v < logits.cols(); ++v) last[static_cast<std::size_t>(v)] = logits(logits.rows() - 1, v);

  // Shift invariance.
  auto shifted = last;
  for (auto& x : shifted) x += 123.0;
  const auto s = softmax(shifted);
  for (std::size_t v = 0; v < s.size(); ++v) CHECK(s[v] == doctest::Approx(dist[v]).epsilon(1e-12));

  const auto argmax_p = std::max_element(dist.begin(), dist.end()) - dist.begin();
  const auto argmax_l = std::max_element(last.begin(), last.end()) - last.begin();
  CHECK(argmax_p == argmax_l);

  const auto uniform = softmax(std::vector<double>(16, 0.7));
  for (double p : uniform) CHECK(p == doctest::Approx(1.0 / 16));

  const double inf = std::numeric_limits<double>::infinity();
  const auto masked = softmax(std::vector<double>{0.0, -inf, 0.0});
  CHECK(masked[1] == 0.0);
  CHECK(masked[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(next_token_dist(params, nullptr, {}), LmError);
}

TEST_CASE("property: causality") {
  SeededRng rng(11);
  for (int iter = 0; iter < 100; ++iter) {
    const auto params = gen::params(rng, kSmall, 0.3);
    const auto prefix = init_prefix(rng.next_u64(), 1 + rng.uniform_index(3), 8);
    const std::size_t n = 1 + rng.uniform_index(kSmall.context_len - prefix.n_virtual());
    auto a = random_tokens(rng, n, 16);
    const std::size_t t = rng.uniform_index(n);
    auto b = a;
    for (std::size_t k = t + 1; k < n; ++k) b[k] = static_cast<TokenId>(rng.uniform_index(16));
    const Matrix la = forward(params, &prefix, a);
    const Matrix lb = forward(params, &prefix, b);
    for (std::size_t r = 0; r <= t; ++r) CHECK(la.row(static_cast<Eigen::Index>(r)) == lb.row(static_cast<Eigen::Index>(r)));
  }
}

TEST_CASE("property: normalization") {
  SeededRng rng(12);
  for (int iter = 0; iter < 200; ++iter) {
    const auto params = gen::params(rng, kSmall, 1.0);
    const auto t = random_tokens(rng, 1 + rng.uniform_index(12), 16);
    const Matrix p = softmax_rows(forward(params, nullptr, t));
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      CHECK(std::abs(p.row(r).sum() - 1.0) <= 1e-9);
      CHECK(p.row(r).minCoeff() >= 0.0);
    }
    const auto l = gen::logits(rng, 1 + rng.uniform_index(20));
    if (std::any_of(l.begin(), l.end(), [](double x) { return std::isfinite(x); })) {
      const auto s = softmax(l);
      double sum = 0.0;
      for (double x : s) {
        CHECK(x >= 0.0);
        sum += x;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("incremental decoder agrees with forward") {
  SeededRng rng(13);
  for (int iter = 0; iter < 30; ++iter) {
    const auto params = gen::params(rng, kSmall, 0.4);
    const auto prefix = init_prefix(rng.next_u64(), 2, 8);
    const bool use_prefix = iter % 2 == 0;
    const std::size_t room = kSmall.context_len - (use_prefix ? 2 : 0);
    const auto t = random_tokens(rng, room, 16);
    const Matrix full = forward(params, use_prefix ? &prefix : nullptr, t);
    IncrementalDecoder dec(params, use_prefix ? &prefix : nullptr);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const RowVector row = dec.push(t[i]);
      CHECK((row - full.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff() <= 1e-10);
    }
    CHECK_THROWS_AS(dec.push(3), LmError);
  }
}

TEST_CASE("backward matches central differences") {
  SeededRng rng(14);
  const LmDims dims{11, 8, 9};
  for (int iter = 0; iter < 5; ++iter) {
    auto params = gen::params(rng, dims, 0.5);
    auto prefix = init_prefix(rng.next_u64(), 2, 8);
    for (auto& x : std::span<double>(prefix.emb.data(), static_cast<std::size_t>(prefix.emb.size()))) x = rng.normal(0, 0.5);
    const auto tokens = random_tokens(rng, 6, dims.vocab);
    Matrix r(6, static_cast<Eigen::Index>(dims.vocab));
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.normal(0, 1);

    const auto cache = forward_cached(params, &prefix, tokens);
    auto grads = LmParams::zeros(dims);
    Matrix pg = Matrix::Zero(prefix.emb.rows(), prefix.emb.cols());
    backward(params, &prefix, cache, r, &grads, &pg);

    auto objective = [&]() { return forward(params, &prefix, tokens).cwiseProduct(r).sum(); };

    std::vector<std::span<double>> p_tensors, g_tensors;
    params.for_each_tensor([&](std::span<double> s) { p_tensors.push_back(s); });
    grads.for_each_tensor([&](std::span<double> s) { g_tensors.push_back(s); });
    p_tensors.emplace_back(prefix.emb.data(), static_cast<std::size_t>(prefix.emb.size()));
    g_tensors.emplace_back(pg.data(), static_cast<std::size_t>(pg.size()));

    double worst = 0.0;
    for (std::size_t k = 0; k < p_tensors.size(); ++k) {
      for (int probe = 0; probe < 6; ++probe) {
        const std::size_t i = rng.uniform_index(p_tensors[k].size());
        double& x = p_tensors[k][i];
        const double orig = x;
        x = orig + 1e-5;
        const double up = objective();
        x = orig - 1e-5;
        const double down = objective();
        x = orig;
        const double fd = (up - down) / 2e-5;
        const double err = oracle::rel_err(g_tensors[k][i], fd);
        worst = std::max(worst, err);
        CHECK_MESSAGE(err <= 1e-5, "tensor " << k << " index " << i << " bp " << g_tensors[k][i] << " fd " << fd);
      }
    }
    MESSAGE("max relative error " << worst);
  }
}

TEST_CASE("save/load round trip and errors") {
  SeededRng rng(15);
  auto params = gen::params(rng, kSmall, 0.3);
  quantize_to_float32(params);
  const auto path = tmp("hg_params.bin");
  save_params(params, path);
  CHECK(load_params(path) == params);
  CHECK(load_params(path, kSmall) == params);

  SUBCASE("shape mismatch names both dims") {
    try {
      load_params(path, LmDims{17, 8, 12});
      FAIL("expected an error");
    } catch (const LmError& e) {
      CHECK(std::string(e.what()).find("17") != std::string::npos);
    }
  }
  SUBCASE("truncated file") {
    const auto size = fs::file_size(path);
    fs::resize_file(path, size - 7);
    CHECK_THROWS_WITH_AS(load_params(path), doctest::Contains("corrupt"), LmError);
    fs::resize_file(path, 10);
    CHECK_THROWS_WITH_AS(load_params(path), doctest::Contains("corrupt"), LmError);
  }
  SUBCASE("version mismatch") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v[4] = {9, 0, 0, 0};
    f.write(v, 4);
    f.close();
    CHECK_THROWS_WITH_AS(load_params(path), doctest::Contains("version"), LmError);
  }
  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_WITH_AS(load_params(path), doctest::Contains("magic"), LmError);
  }
}

TEST_CASE("prefix save/load") {
  auto prefix = init_prefix(21, 20, 8);
  const auto path = tmp("hg_prefix.bin");
  save_prefix(prefix, kSmall, path);
  CHECK(load_prefix(path, kSmall) == prefix);
  CHECK(load_prefix(path, kSmall, 20) == prefix);
  CHECK_THROWS_AS(load_prefix(path, kSmall, 10), LmError);
  CHECK_THROWS_AS(load_prefix(path, LmDims{16, 8, 40}), LmError);
  CHECK_THROWS_AS(load_params(path), LmError);

  const auto base = tmp("hg_base_for_prefix.bin");
  save_params(init_params(1, kSmall), base);
  CHECK_THROWS_AS(load_prefix(base, kSmall), LmError);
}

TEST_CASE("property: save/load is bit-exact on random params") {
  SeededRng rng(16);
  const auto path = tmp("hg_params_prop.bin");
  for (int iter = 0; iter < 20; ++iter) {
    const LmDims dims{5 + rng.uniform_index(20), 8 + rng.uniform_index(9), 2 + rng.uniform_index(20)};
    auto params = gen::params(rng, dims, 2.0);
    params.seed = rng.next_u64();
    quantize_to_float32(params);
    save_params(params, path);
    const auto back = load_params(path, dims);
    CHECK(back == params);
    CHECK(back.seed == params.seed);
  }
}

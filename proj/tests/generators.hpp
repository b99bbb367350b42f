#pragma once

// Small random generators for property tests.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hipsgen/control_code.hpp"
#include "hipsgen/corpus.hpp"
#include "hipsgen/lm.hpp"
#include "hipsgen/rng.hpp"
#include "hipsgen/text.hpp"

namespace gen {

using hipsgen::RandomSource;

inline const std::vector<std::string>& words() {
  static const std::vector<std::string> w = {"a", "b", "c", "d", "e", "the", "court", "Apple", "apple", "New",
                                             "York", "City", "42", "36244/06", "$87,500", "45%", "x", "y"};
  return w;
}

inline std::vector<std::string> token_seq(RandomSource& rng, std::size_t max_len, std::size_t alphabet) {
  const std::size_t n = rng.uniform_index(max_len + 1);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(1, static_cast<char>('a' + rng.uniform_index(alphabet))));
  return out;
}

inline std::string sentence(RandomSource& rng, std::size_t max_words) {
  const std::size_t n = 1 + rng.uniform_index(max_words);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += rng.uniform_index(8) == 0 ? "\n" : " ";
    s += words()[rng.uniform_index(words().size())];
    if (rng.uniform_index(6) == 0) s += rng.uniform_index(2) ? "." : ",";
  }
  return s;
}

// A document whose spans are disjoint word ranges with random categories.
inline hipsgen::Document document(RandomSource& rng, const std::string& id) {
  hipsgen::Document d;
  d.id = id;
  const std::size_t n = 1 + rng.uniform_index(10);
  std::size_t cps = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) {
      d.text += " ";
      ++cps;
    }
    const auto& w = words()[rng.uniform_index(words().size())];
    const std::size_t start = cps;
    d.text += w;
    cps += hipsgen::code_point_length(w);
    if (rng.uniform_index(3) == 0) {
      const auto cat = hipsgen::kAllCategories[rng.uniform_index(8)];
      const auto cls = rng.uniform_index(2) ? hipsgen::IdentifierClass::DIRECT : hipsgen::IdentifierClass::QUASI;
      d.spans.push_back({start, cps, w, cat, cls});
    }
  }
  return d;
}

inline std::string code_value(RandomSource& rng) {
  const std::size_t n = 1 + rng.uniform_index(3);
  std::string v;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) v += " ";
    v += words()[rng.uniform_index(words().size())];
  }
  return v;
}

inline hipsgen::ControlCode control_code(RandomSource& rng) {
  hipsgen::ControlCode c;
  std::vector<hipsgen::Category> cats(hipsgen::kAllCategories.begin(), hipsgen::kAllCategories.end());
  rng.shuffle(cats);
  const std::size_t n = rng.uniform_index(cats.size() + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t values = 1 + rng.uniform_index(3);
    for (std::size_t k = 0; k < values; ++k) c.add(cats[i], code_value(rng));
  }
  return c;
}

// Random logits with occasional -inf entries and ties.
inline std::vector<double> logits(RandomSource& rng, std::size_t n) {
  std::vector<double> out(n);
  for (auto& x : out) {
    const auto r = rng.uniform_index(10);
    if (r == 0) x = -std::numeric_limits<double>::infinity();
    else if (r == 1) x = 1.0;
    else x = rng.normal(0.0, 2.0);
  }
  return out;
}

// Parameters with a larger spread than the default initializer so that
// gradients are well away from zero.
inline hipsgen::LmParams params(RandomSource& rng, const hipsgen::LmDims& dims, double scale) {
  auto p = hipsgen::LmParams::zeros(dims);
  p.for_each_tensor([&](std::span<double> s) {
    for (auto& x : s) x = rng.normal(0.0, scale);
  });
  for (auto* g : {&p.ln1_g, &p.ln2_g}) {
    for (Eigen::Index i = 0; i < g->size(); ++i) (*g)(i) = 1.0 + rng.normal(0.0, 0.1);
  }
  return p;
}

}  // namespace gen

// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "generators.hpp"
#include "hipsgen/backend.hpp"
#include "hipsgen/pipeline.hpp"
#include "oracles.hpp"

using namespace hipsgen;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path& work() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "hg_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Desk settings with paths redirected into `dir`.
RunConfig desk(const fs::path& dir, Method method) {
  auto c = run_config_from_ini(Ini::load(DESK_INI));
  c.method = method;
  c.output_dir = dir / "runs";
  c.train_path = dir / "data/train.jsonl";
  c.test_path = dir / "data/test.jsonl";
  c.public_path = dir / "data/public.jsonl";
  c.vocab_path = dir / "model/vocab.txt";
  c.base_model_path = dir / "model/base.bin";
  c.loc_gazetteer_path = dir / "data/loc_gazetteer.txt";
  c.org_gazetteer_path = dir / "data/org_gazetteer.txt";
  return c;
}

// Planted corpus and pretrained base shared by criteria 1 and 7.
const fs::path& desk_dir() {
  static const fs::path dir = [] {
    const auto d = work() / "desk";
    write_planted_corpus(PlantedConfig{}, d / "data");
    const auto t = std::chrono::steady_clock::now();
    const auto r = run_pretrain(desk(d, Method::ICL));
    std::cout << "  (pretrained desk base in " << fmt("%.1f", seconds_since(t)) << " s, vocab " << r.vocab.size()
              << ", final loss " << fmt("%.3f", r.epoch_loss.back()) << ")\n";
    return d;
  }();
  return dir;
}

Outcome blocking_guarantee() {
  auto cfg = desk(desk_dir(), Method::ICL_ENHANCED);
  cfg.n_samples = 167;
  const auto ws = load_workspace(cfg);
  RunCounters counters;
  std::vector<std::string> outputs;
  std::vector<std::vector<std::string>> blocked;
  std::map<std::string, const Document*> by_id;
  for (const auto& d : ws.train) by_id[d.id] = &d;
  const auto t = std::chrono::steady_clock::now();
  for (auto seed : cfg.seeds) {
    for (const auto& r : run_icl_seed(ws, seed, counters)) {
      outputs.push_back(r.text);
      std::vector<std::string> values;
      for (const auto& id : r.example_ids) {
        for (const auto& v : generator_code(ws, *by_id.at(id)).values()) values.push_back(v);
      }
      blocked.push_back(values);
    }
  }
  const double secs = seconds_since(t);
  const double p = pipp(outputs, blocked, cfg.policy);
  std::size_t nonempty = 0;
  for (const auto& o : outputs) nonempty += o.empty() ? 0 : 1;
  Outcome o;
  o.pass = outputs.size() >= 500 && p == 0.0 && secs <= 120.0;
  o.detail = std::to_string(outputs.size()) + " generations (" + std::to_string(nonempty) + " non-empty), PIPP " +
             fmt("%.2f%%", p) + ", " + fmt("%.1f s", secs) + ", forced EOS " + std::to_string(counters.forced_eos) +
             ", unblockable values " + std::to_string(counters.unblockable_values);
  return o;
}

TrainingPair random_pair(RandomSource& rng, std::size_t vocab, std::size_t max_len) {
  TrainingPair p;
  p.id = "p";
  const std::size_t n_in = rng.uniform_index(4);
  const std::size_t n_tgt = 1 + rng.uniform_index(max_len - n_in - 1);
  for (std::size_t i = 0; i < n_in; ++i) p.input.push_back(static_cast<TokenId>(5 + rng.uniform_index(vocab - 5)));
  for (std::size_t i = 0; i < n_tgt; ++i) p.target.push_back(static_cast<TokenId>(3 + rng.uniform_index(vocab - 3)));
  p.mask.resize(n_tgt);
  for (auto& m : p.mask) m = static_cast<std::uint8_t>(rng.uniform_index(2));
  return p;
}

Outcome gradient_correctness() {
  SeededRng rng(2024);
  double worst = 0.0;
  std::size_t max_prefix = 0, clamps = 0;
  for (int iter = 0; iter < 20; ++iter) {
    const LmDims dims{12 + rng.uniform_index(20), 8 + 4 * rng.uniform_index(3), 12 + rng.uniform_index(8)};
    const auto base = gen::params(rng, dims, 0.3);
    auto prefix = init_prefix(rng.next_u64(), 1 + rng.uniform_index(5), dims.d_model);
    for (Eigen::Index i = 0; i < prefix.emb.size(); ++i) prefix.emb.data()[i] = rng.normal(0, 0.5);
    max_prefix = std::max(max_prefix, static_cast<std::size_t>(prefix.emb.size()));
    std::vector<TrainingPair> batch;
    const std::size_t bs = 1 + rng.uniform_index(3);
    for (std::size_t b = 0; b < bs; ++b) {
      batch.push_back(random_pair(rng, dims.vocab, dims.context_len - prefix.n_virtual()));
    }
    ObjectiveOptions opt;
    opt.weights = {0.2 + rng.uniform01(), 0.2 + rng.uniform01(), 0.2 + rng.uniform01()};
    opt.sign = rng.uniform_index(2) ? ContrastiveSign::AS_WRITTEN : ContrastiveSign::NEGATED;
    opt.mask_lm = rng.uniform_index(2) == 0;
    const auto res = evaluate_objective(base, prefix, batch, opt, true);
    clamps += res.clamps.total();
    std::vector<double> x(prefix.emb.data(), prefix.emb.data() + prefix.emb.size());
    const auto fd = oracle::central_diff(
        [&](const std::vector<double>& v) {
          PrefixParams p = prefix;
          std::copy(v.begin(), v.end(), p.emb.data());
          return evaluate_objective(base, p, batch, opt, false).total;
        },
        x, 1e-4);
    for (std::size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, oracle::rel_err(res.prefix_grad.data()[i], fd[i]));
  }
  return {worst <= 1e-4 && clamps == 0 && max_prefix <= 10000,
          "20 configurations, max relative error " + fmt("%.3g", worst) + ", largest prefix " +
              std::to_string(max_prefix) + " params, clamps " + std::to_string(clamps)};
}

Outcome loss_identities() {
  SeededRng rng(3);
  double worst = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    const auto n = static_cast<Eigen::Index>(1 + rng.uniform_index(10));
    const auto v = static_cast<Eigen::Index>(3 + rng.uniform_index(20));
    Matrix logits(n, v);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal(0, 2);
    const Matrix p = softmax_rows(logits);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal(0, 2);
    const Matrix q = softmax_rows(logits);
    std::vector<TokenId> y(static_cast<std::size_t>(n));
    for (auto& t : y) t = static_cast<TokenId>(rng.uniform_index(static_cast<std::size_t>(v)));
    PrivacyMask m(y.size());
    std::size_t k = 0;
    for (auto& b : m) {
      b = static_cast<std::uint8_t>(rng.uniform_index(2));
      k += b ? 0 : 1;
    }
    const PrivacyMask ones(y.size(), 1), zeros(y.size(), 0);
    worst = std::max(worst, std::abs(kl_loss(p, p, m)));
    worst = std::max(worst, std::abs(contrastive_loss(p, p, y, m) - static_cast<double>(k) * std::log(2.0)));
    worst = std::max(worst, std::abs(contrastive_loss(p, q, y, ones)));
    worst = std::max(worst, std::abs(kl_loss(p, q, zeros)));
    const LossComponents c{lm_loss(p, y), contrastive_loss(p, q, y, m), kl_loss(p, q, m)};
    worst = std::max(worst, std::abs(total_loss(c, {1.0, 0.0, 0.0}) - c.lm));
  }
  return {worst <= 1e-9, "200 random cases, max deviation " + fmt("%.3g", worst)};
}

std::vector<std::string> cased(RandomSource& rng, std::size_t max_len) {
  static const std::vector<std::string> alpha = {"a", "A", "b", "B", "c"};
  std::vector<std::string> out(rng.uniform_index(max_len + 1));
  for (auto& t : out) t = alpha[rng.uniform_index(alpha.size())];
  return out;
}

std::string join(const std::vector<std::string>& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) s += (i ? " " : "") + t[i];
  return s;
}

Outcome metric_oracles() {
  SeededRng rng(4);
  std::size_t mismatches = 0;
  for (int iter = 0; iter < 200; ++iter) {
    const auto c = gen::token_seq(rng, 12, 4);
    const auto r = gen::token_seq(rng, 12, 4);
    mismatches += rouge2_tokens(c, r) != oracle::rouge2(c, r);
    mismatches += rougeL_tokens(c, r) != oracle::rougeL(c, r);
    const auto lc = gen::token_seq(rng, 60, 5);
    const auto lr = gen::token_seq(rng, 60, 5);
    mismatches += lcs_length(lc, lr) != oracle::lcs_recursive(lc, lr);
  }
  std::size_t leak_mismatches = 0;
  for (int iter = 0; iter < 100; ++iter) {
    const bool insensitive = rng.uniform_index(2) == 0;
    const MatchPolicy policy{insensitive ? CaseSensitivity::INSENSITIVE : CaseSensitivity::SENSITIVE};
    std::vector<std::string> outputs, global;
    std::vector<std::vector<std::string>> ents;
    std::vector<std::vector<std::string>> out_toks;
    std::vector<std::vector<std::vector<std::string>>> ent_toks;
    const std::size_t n = 1 + rng.uniform_index(6);
    for (std::size_t i = 0; i < n; ++i) {
      out_toks.push_back(cased(rng, 12));
      outputs.push_back(join(out_toks.back()));
      ents.emplace_back();
      ent_toks.emplace_back();
      const std::size_t k = rng.uniform_index(4);
      for (std::size_t j = 0; j < k; ++j) {
        auto e = cased(rng, 3);
        if (e.empty()) e.push_back("c");
        ents.back().push_back(join(e));
        ent_toks.back().push_back(e);
        global.push_back(join(e));
      }
    }
    leak_mismatches += std::abs(pipp(outputs, ents, policy) - oracle::pipp(out_toks, ent_toks, insensitive)) > 1e-12;
    leak_mismatches += std::abs(elp_icl(outputs, ents, policy) - oracle::elp_icl(out_toks, ent_toks, insensitive)) > 1e-12;
    if (!global.empty()) {
      std::vector<std::vector<std::string>> g;
      for (const auto& e : ents) {
        for (const auto& s : e) g.push_back(word_tokens(s));
      }
      leak_mismatches += std::abs(elp_ft(outputs, global, policy) - oracle::elp_ft(out_toks, g, insensitive)) > 1e-12;
    }
  }
  return {mismatches == 0 && leak_mismatches == 0,
          "ROUGE/LCS mismatches " + std::to_string(mismatches) + " over 200 pairs, PIPP/ELP mismatches " +
              std::to_string(leak_mismatches) + " over 100 fixtures"};
}

Outcome analytic_utility() {
  LmParams p = init_params(1, {37, 8, 16});
  p.tok_emb.setZero();
  const auto uniform = perplexity(p, nullptr, {{5, 6, 7, 8}, {9, 10}});
  const double e1 = std::abs(uniform.perplexity - 37.0);
  const double e2 = std::abs(perplexity_from_probs({{0.5}, {0.25}}).perplexity - std::sqrt(8.0));
  return {e1 <= 1e-6 && e2 <= 1e-9,
          "uniform model " + fmt("%.9f", uniform.perplexity) + " vs 37, two-token case error " + fmt("%.3g", e2)};
}

bool contains_run(const std::vector<TokenId>& hay, const std::vector<TokenId>& needle) {
  if (needle.size() > hay.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) return true;
  }
  return false;
}

Outcome decoding_soundness() {
  SeededRng rng(6);
  std::size_t steps = 0, outside = 0, completions = 0, locality = 0, filter_checks = 0;
  while (steps < 10000) {
    const LmDims dims{10 + rng.uniform_index(30), 8, 64};
    const auto params = gen::params(rng, dims, 1.0);
    std::vector<std::string> words;
    for (std::size_t i = kReservedCount; i < dims.vocab; ++i) words.push_back("w" + std::to_string(i));
    const Vocabulary vocab(words);
    InternalBackend backend(params, nullptr, vocab);
    BadTokenList bad;
    const std::size_t n_bad = 1 + rng.uniform_index(12);
    for (std::size_t b = 0; b < n_bad; ++b) {
      std::vector<TokenId> seq(1 + rng.uniform_index(3));
      for (auto& t : seq) t = static_cast<TokenId>(kReservedCount + rng.uniform_index(dims.vocab - kReservedCount));
      bad.add(seq);
    }
    DecodeConfig dc;
    dc.max_new_tokens = 40;
    dc.temperature = 0.3 + 1.7 * rng.uniform01();
    dc.top_p = 0.3 + 0.7 * rng.uniform01();
    dc.seed = rng.next_u64();
    std::vector<SampleStep> record;
    const auto r = backend.generate_ids(std::vector<TokenId>{kBos}, dc, &bad, &record);
    for (const auto& st : record) {
      ++steps;
      outside += std::find(st.nucleus.ids.begin(), st.nucleus.ids.end(), st.token) == st.nucleus.ids.end();
    }
    for (const auto& seq : bad.sequences) completions += contains_run(r.tokens, seq);

    std::vector<double> logits(dims.vocab);
    for (auto& x : logits) x = rng.normal(0, 1);
    std::vector<TokenId> suffix(rng.uniform_index(4));
    for (auto& t : suffix) t = static_cast<TokenId>(kReservedCount + rng.uniform_index(dims.vocab - kReservedCount));
    auto filtered = logits;
    const bool forced = apply_bad_token_filter(filtered, suffix, bad);
    ++filter_checks;
    for (std::size_t t = 0; t < logits.size(); ++t) {
      bool banned = false;
      for (const auto& seq : bad.sequences) {
        const std::size_t need = seq.size() - 1;
        if (seq.back() == static_cast<TokenId>(t) && need <= suffix.size() &&
            std::equal(seq.begin(), seq.end() - 1, suffix.end() - static_cast<std::ptrdiff_t>(need))) {
          banned = true;
        }
      }
      const double expect = banned ? -std::numeric_limits<double>::infinity() : logits[t];
      if (!forced && filtered[t] != expect) ++locality;
    }
  }
  return {outside == 0 && completions == 0 && locality == 0,
          std::to_string(steps) + " steps: " + std::to_string(outside) + " outside nucleus, " +
              std::to_string(completions) + " banned completions, " + std::to_string(locality) +
              " non-local filter changes over " + std::to_string(filter_checks) + " filter calls"};
}

double mean_private_prob(const LmParams& base, const PrefixParams* prefix, const std::vector<TrainingPair>& pairs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& pair : pairs) {
    const auto seq = pair.sequence();
    const Matrix probs = softmax_rows(forward(base, prefix, seq));
    for (std::size_t t = 0; t < pair.target.size(); ++t) {
      if (pair.mask[t]) continue;
      sum += probs(static_cast<Eigen::Index>(pair.input.size() + t), pair.target[t]);
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double mean_row(const EvalResult& r, double MetricsRow::*field) {
  for (const auto& row : r.rows) {
    if (row.seed == "mean") return row.*field;
  }
  return 0.0;
}

Outcome directional() {
  const auto t = std::chrono::steady_clock::now();
  const auto& dir = desk_dir();
  std::ostringstream detail;

  const auto icl_ws = load_workspace(desk(dir, Method::ICL));
  run_icl_experiment(icl_ws);
  const auto icl_eval = evaluate_run(icl_ws);
  const double icl_rouge = mean_row(icl_eval, &MetricsRow::rougeL);
  double best_example = 0.0;
  std::size_t n_best = 0;
  for (const auto& seed : icl_eval.detail["seeds"]) {
    for (const auto& smp : seed["samples"]) {
      best_example += smp["rougeL_best_example"].get<double>();
      ++n_best;
    }
  }
  detail << " (best single example " << fmt("%.4f", best_example / static_cast<double>(n_best)) << ")";

  double ft_elp = 0.0, masked_elp = 0.0, ft_rouge = 0.0;
  for (auto m : {Method::FT, Method::FT_MASKED}) {
    const auto ws = load_workspace(desk(dir, m));
    run_train_prefix(ws);
    run_gen_ft(ws);
    const auto res = evaluate_run(ws);
    (m == Method::FT ? ft_elp : masked_elp) = mean_row(res, &MetricsRow::elp);
    if (m == Method::FT) ft_rouge = mean_row(res, &MetricsRow::rougeL);
  }

  const auto& ws = icl_ws;
  const auto entities = gold_training_entities(ws);
  double mem_elp = 0.0;
  for (auto seed : ws.config.seeds) {
    const auto outs = sample_memorizer(ws, seed, 30, 3e-3, ws.train.size());
    mem_elp += elp_ft(outs, entities, ws.config.policy) / static_cast<double>(ws.config.seeds.size());
  }

  auto neg_cfg = desk(dir, Method::FT_MASKED);
  neg_cfg.train.contrastive_sign = ContrastiveSign::NEGATED;
  neg_cfg.train.mask_lm = true;
  const auto neg_ws = load_workspace(neg_cfg);
  const auto pairs = make_training_pairs(neg_ws, nullptr);
  const double base_p = mean_private_prob(neg_ws.base, nullptr, pairs);
  bool c_ok = true;
  detail << (ft_rouge < icl_rouge ? " ok" : " VIOLATED") << "; (c) base " << fmt("%.4g", base_p) << " vs negated";
  for (auto seed : neg_cfg.seeds) {
    const auto res = train_prefix_seed(neg_ws, seed, pairs);
    const double p = mean_private_prob(neg_ws.base, &res.prefix, pairs);
    c_ok = c_ok && p < base_p;
    detail << " " << fmt("%.4g", p);
  }

  const bool a_ok = mem_elp > ft_elp && mem_elp > masked_elp;
  const bool b_ok = ft_rouge < icl_rouge;
  std::ostringstream head;
  head << "(a) ELP memorizer " << fmt("%.2f", mem_elp) << " vs ft " << fmt("%.2f", ft_elp) << ", ft_masked "
       << fmt("%.2f", masked_elp) << (a_ok ? " ok" : " VIOLATED") << "; (b) ROUGE-L ft " << fmt("%.4f", ft_rouge)
       << " vs icl " << fmt("%.4f", icl_rouge) << detail.str() << (c_ok ? " ok" : " VIOLATED") << "; " << fmt("%.0f s", seconds_since(t));
  return {a_ok && b_ok && c_ok, head.str()};
}

// Every JSONL and CSV file below `dir`, keyed by relative path.
std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".jsonl" || ext == ".csv" || ext == ".txt" || ext == ".bin")) {
      out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
  }
  return out;
}

void full_run(const fs::path& dir) {
  PlantedConfig pc;
  pc.train_docs = 30;
  pc.test_docs = 6;
  pc.public_docs = 60;
  write_planted_corpus(pc, dir / "data");
  auto base_cfg = desk(dir, Method::ICL);
  base_cfg.d_model = 16;
  base_cfg.pretrain_epochs = 2;
  base_cfg.n_samples = 6;
  base_cfg.train.epochs = 1;
  base_cfg.utility_epochs = 1;
  run_pretrain(base_cfg);
  for (auto m : {Method::BASELINE_ICL, Method::ICL, Method::ICL_ENHANCED}) {
    auto c = base_cfg;
    c.method = m;
    const auto ws = load_workspace(c);
    run_build_codes(ws, dir / "codes.jsonl");
    run_icl_experiment(ws);
    evaluate_run(ws);
  }
  for (auto m : {Method::FT, Method::FT_MASKED}) {
    auto c = base_cfg;
    c.method = m;
    const auto ws = load_workspace(c);
    run_train_prefix(ws);
    run_gen_ft(ws);
    evaluate_run(ws);
  }
}

Outcome reproducibility() {
  full_run(work() / "repro-a");
  full_run(work() / "repro-b");
  const auto a = artifacts(work() / "repro-a");
  const auto b = artifacts(work() / "repro-b");
  std::size_t differing = 0, jsonl = 0, csv = 0;
  for (const auto& [k, v] : a) {
    jsonl += k.ends_with(".jsonl");
    csv += k.ends_with(".csv");
    auto it = b.find(k);
    if (it == b.end() || it->second != v) {
      ++differing;
      std::cout << "  differs: " << k << "\n";
    }
  }
  return {differing == 0 && a.size() == b.size() && csv == 5,
          std::to_string(a.size()) + " artifacts (" + std::to_string(jsonl) + " JSONL, " + std::to_string(csv) +
              " CSV), " + std::to_string(differing) + " differ"};
}

Outcome regenerate_on_leak() {
  DecodeConfig dc;
  dc.seed = 9;
  SubprocessBackend leaky({STUB_BACKEND, "script", "Henrik Hasslund signed", "HENRIK HASSLUND again", "a clean text"});
  const auto r1 = generate_until_clean(leaky, "prompt", dc, {"Henrik Hasslund"}, 5);
  SubprocessBackend always({STUB_BACKEND, "script", "henrik hasslund forever"});
  const auto r2 = generate_until_clean(always, "prompt", dc, {"Henrik Hasslund"}, 3);
  const bool ok = r1.attempts == 3 && r1.clean && !r2.clean && r2.attempts == 3;
  return {ok, "scripted: attempts " + std::to_string(r1.attempts) + (r1.clean ? " clean" : " unclean") +
                  "; always leaking: attempts " + std::to_string(r2.attempts) + (r2.clean ? " clean" : " unclean")};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number.
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"blocking guarantee", blocking_guarantee},
      {"gradient correctness", gradient_correctness},
      {"loss identities", loss_identities},
      {"metric oracle equivalence", metric_oracles},
      {"analytic utility checks", analytic_utility},
      {"decoding soundness", decoding_soundness},
      {"directional desk-scale experiment", directional},
      {"reproducibility", reproducibility},
      {"regenerate on leak", regenerate_on_leak},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << o.detail << "\n"
              << std::flush;
  }
  return failed ? 1 : 0;
}

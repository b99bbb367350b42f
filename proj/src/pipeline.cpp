#include "hipsgen/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "hipsgen/backend.hpp"
#include "hipsgen/metrics.hpp"
#include "hipsgen/rng.hpp"
#include "hipsgen/text.hpp"

namespace hipsgen {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PipelineError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError("missing run file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text(path, text);
}

std::vector<TokenId> with_bos_eos(std::vector<TokenId> body) {
  body.insert(body.begin(), kBos);
  body.push_back(kEos);
  return body;
}

std::string base_id(const std::string& id) {
  const auto pos = id.find("#s");
  return pos == std::string::npos ? id : id.substr(0, pos);
}

std::string segment_key(const std::string& id) {
  const auto pos = id.find("#s");
  return pos == std::string::npos ? std::string() : id.substr(pos);
}

std::string setting_label(const RunConfig& c) {
  auto classes = to_string(c.identifier_classes);
  std::replace(classes.begin(), classes.end(), ',', '+');
  return std::string(to_string(c.entity_setting)) + ":" + classes;
}

}  // namespace

void write_planted_corpus(const PlantedConfig& config, const fs::path& dir) {
  const auto corpus = generate_planted(config);
  fs::create_directories(dir);
  save_corpus(dir / "train.jsonl", corpus.train);
  save_corpus(dir / "test.jsonl", corpus.test);
  save_corpus(dir / "public.jsonl", corpus.public_docs);
  write_lines(dir / "loc_gazetteer.txt", corpus.loc_gazetteer);
  write_lines(dir / "org_gazetteer.txt", corpus.org_gazetteer);
}

Vocabulary build_pipeline_vocab(const std::vector<Document>& train, const std::vector<Document>& test,
                                const std::vector<Document>& public_docs, const FictionalPools& pools,
                                std::size_t min_freq) {
  std::vector<std::string> texts;
  for (const auto* docs : {&train, &test, &public_docs}) {
    for (const auto& d : *docs) texts.push_back(d.text);
  }
  std::vector<std::string> always = {":", ","};
  for (auto c : kAllCategories) always.emplace_back(to_string(c));
  for (const auto& v : pools.all_values()) {
    for (auto& w : word_tokens(v)) always.push_back(std::move(w));
  }
  for (const auto& m : month_names()) always.push_back(m);
  return build_vocab_from_texts(texts, min_freq, always);
}

std::vector<std::vector<TokenId>> pretraining_sequences(const std::vector<Document>& public_docs,
                                                        const Vocabulary& vocab, std::size_t context_len,
                                                        std::uint64_t seed) {
  if (public_docs.empty()) throw PipelineError("pretraining needs a non-empty public corpus");
  SeededRng rng(derive_seed(seed, 20));
  const std::vector<ClassSet> class_sets = {ClassSet::direct_only(), ClassSet::both(), ClassSet::quasi_only()};
  std::vector<std::vector<TokenId>> out;
  for (std::size_t i = 0; i < public_docs.size(); ++i) {
    const std::size_t blocks = 1 + rng.uniform_index(3);
    std::vector<TokenId> seq{kBos};
    for (std::size_t b = 0; b < blocks; ++b) {
      const auto& doc = b == 0 ? public_docs[i] : public_docs[rng.uniform_index(public_docs.size())];
      std::string text;
      if (rng.uniform_index(5) != 0) text = render(build_control_code(doc, class_sets[rng.uniform_index(3)]));
      text += doc.text;
      auto ids = tokenize_ids(text, vocab);
      std::vector<TokenId> block = b == 0 ? std::vector<TokenId>{} : std::vector<TokenId>{kNewline, kNewline};
      block.insert(block.end(), ids.begin(), ids.end());
      if (seq.size() + block.size() + 1 > context_len) break;
      seq.insert(seq.end(), block.begin(), block.end());
    }
    if (seq.size() == 1) continue;
    seq.push_back(kEos);
    out.push_back(std::move(seq));
  }
  return out;
}

namespace {

FictionalPools pools_for(const RunConfig& c) {
  return c.pools_path.empty() ? FictionalPools::defaults() : FictionalPools::load_overrides(c.pools_path);
}

}  // namespace

PretrainResult pretrain_base(const RunConfig& config) {
  const auto train = load_corpus(config.train_path);
  const auto test = load_corpus(config.test_path);
  if (config.public_path.empty()) throw ConfigError("corpus.public is required for pretraining");
  const auto pub = load_corpus(config.public_path);
  PretrainResult r;
  r.vocab = build_pipeline_vocab(train, test, pub, pools_for(config), config.vocab_min_freq);
  const LmDims dims{r.vocab.size(), config.d_model, config.context_len};
  const auto init = init_params(config.model_seed, dims);
  LmTrainConfig tc;
  tc.epochs = config.pretrain_epochs;
  tc.learning_rate = config.pretrain_learning_rate;
  tc.seed = config.model_seed;
  auto trained = train_lm(init, pretraining_sequences(pub, r.vocab, config.context_len, config.model_seed), tc);
  r.base = std::move(trained.params);
  r.base.seed = config.model_seed;
  r.epoch_loss = std::move(trained.epoch_loss);
  return r;
}

PretrainResult run_pretrain(const RunConfig& config) {
  if (config.vocab_path.empty() || config.base_model_path.empty()) {
    throw ConfigError("corpus.vocab and corpus.base_model are required");
  }
  auto r = pretrain_base(config);
  if (config.vocab_path.has_parent_path()) fs::create_directories(config.vocab_path.parent_path());
  if (config.base_model_path.has_parent_path()) fs::create_directories(config.base_model_path.parent_path());
  r.vocab.save(config.vocab_path);
  save_params(r.base, config.base_model_path);
  return r;
}

Workspace load_workspace(const RunConfig& config) {
  config.validate();
  if (config.train_path.empty()) throw ConfigError("corpus.train is required");
  if (config.vocab_path.empty() || config.base_model_path.empty()) {
    throw ConfigError("corpus.vocab and corpus.base_model are required");
  }
  Workspace ws;
  ws.config = config;
  ws.config.train.n_virtual = config.n_virtual;
  ws.train_original = load_corpus(config.train_path);
  if (!config.test_path.empty()) ws.test = load_corpus(config.test_path);
  if (config.segment) {
    SegmentStats stats;
    for (const auto& d : ws.train_original) {
      for (auto& s : segment_document(d, config.segment_boundary, config.segment_limit, &stats)) {
        ws.train.push_back(std::move(s));
      }
    }
    ws.dropped_spans = stats.dropped_spans;
  } else {
    ws.train = ws.train_original;
  }
  ws.vocab = Vocabulary::load(config.vocab_path);
  ws.base = load_params(config.base_model_path, LmDims{ws.vocab.size(), config.d_model, config.context_len});
  ws.pools = pools_for(config);
  if (!config.loc_gazetteer_path.empty()) ws.recognizer.loc_gazetteer = load_gazetteer(config.loc_gazetteer_path);
  if (!config.org_gazetteer_path.empty()) ws.recognizer.org_gazetteer = load_gazetteer(config.org_gazetteer_path);
  return ws;
}

std::vector<EntitySpan> generator_spans(const Workspace& ws, const Document& doc) {
  if (ws.config.entity_setting == EntitySetting::KNOWN) return doc.spans;
  return recognize(doc.text, ws.recognizer);
}

ClassSet generator_classes(const Workspace& ws) {
  return ws.config.entity_setting == EntitySetting::KNOWN ? ws.config.identifier_classes : ClassSet::direct_only();
}

ControlCode generator_code(const Workspace& ws, const Document& doc) {
  Document view{doc.id, doc.text, generator_spans(ws, doc)};
  return build_control_code(view, generator_classes(ws));
}

std::vector<std::string> gold_entities(const Workspace& ws, const Document& doc) {
  const auto id = base_id(doc.id);
  if (id == doc.id) return entity_surfaces(doc, ws.config.identifier_classes);
  auto it = std::find_if(ws.train_original.begin(), ws.train_original.end(),
                         [&](const Document& d) { return d.id == id; });
  if (it == ws.train_original.end()) return entity_surfaces(doc, ws.config.identifier_classes);
  // Entities of the whole document that occur in this segment's text.
  const auto all = entity_surfaces(*it, ws.config.identifier_classes);
  return contains_private(doc.text, all, MatchPolicy{CaseSensitivity::SENSITIVE}).matched;
}

std::vector<std::string> gold_training_entities(const Workspace& ws) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& d : ws.train_original) {
    for (const auto& e : entity_surfaces(d, ws.config.identifier_classes)) {
      if (seen.insert(e).second) out.push_back(e);
    }
  }
  return out;
}

void run_build_codes(const Workspace& ws, const fs::path& out) {
  std::vector<std::string> lines;
  for (const auto& d : ws.train) {
    nlohmann::json j = {{"id", d.id}, {"code", render(generator_code(ws, d))}};
    lines.push_back(j.dump());
  }
  write_lines(out, lines);
}

nlohmann::json GeneratedRecord::to_json() const {
  nlohmann::json j = {{"sample_id", sample_id},       {"seed", seed}, {"method", method},
                      {"fictional_code", fictional_code}, {"text", text}, {"attempts", attempts},
                      {"leak_flag", leak_flag}};
  if (!example_ids.empty()) j["example_ids"] = example_ids;
  if (!source_id.empty()) j["source_id"] = source_id;
  return j;
}

GeneratedRecord GeneratedRecord::from_json(const nlohmann::json& j) {
  GeneratedRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.method = j.at("method").get<std::string>();
  r.fictional_code = j.at("fictional_code").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.attempts = j.at("attempts").get<std::size_t>();
  r.leak_flag = j.at("leak_flag").get<bool>();
  if (j.contains("example_ids")) r.example_ids = j["example_ids"].get<std::vector<std::string>>();
  if (j.contains("source_id")) r.source_id = j["source_id"].get<std::string>();
  return r;
}

nlohmann::json RunCounters::to_json() const {
  return {{"forced_eos", forced_eos},         {"unblockable_values", unblockable_values},
          {"context_limit_hits", context_limit_hits}, {"unclean_samples", unclean_samples},
          {"skipped_pairs", skipped_pairs},   {"clamps", clamps}};
}

fs::path method_dir(const RunConfig& config) { return config.output_dir / std::string(to_string(config.method)); }

fs::path seed_dir(const RunConfig& config, std::uint64_t seed) {
  return method_dir(config) / ("seed-" + std::to_string(seed));
}

std::vector<GeneratedRecord> load_records(const fs::path& path) {
  std::vector<GeneratedRecord> out;
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(GeneratedRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw PipelineError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void save_records(const fs::path& path, const std::vector<GeneratedRecord>& records) {
  std::vector<std::string> lines;
  for (const auto& r : records) lines.push_back(r.to_json().dump());
  write_lines(path, lines);
}

namespace {

std::vector<std::string> dedup(const std::vector<std::string>& values) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& v : values) {
    if (seen.insert(v).second) out.push_back(v);
  }
  return out;
}

void write_manifest(const Workspace& ws, const std::vector<fs::path>& outputs, const RunCounters& counters,
                    double seconds) {
  nlohmann::json j;
  j["artifact_version"] = kArtifactVersion;
  j["config"] = run_config_to_ini(ws.config).serialize();
  j["outputs"] = nlohmann::json::array();
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    j["outputs"].push_back({{"seed", ws.config.seeds[i]}, {"path", outputs[i].string()}});
  }
  j["wall_clock_seconds"] = seconds;
  j["warnings"] = counters.to_json();
  j["warnings"]["dropped_segment_spans"] = ws.dropped_spans;
  j["conventions"] = {{"segment_mean", "unweighted"},
                      {"elp_icl_empty_context", "counted as 0"},
                      {"match_policy", std::string(to_string(ws.config.policy.case_sensitivity))},
                      {"icl_model", "base model, unmodified"}};
  write_text(method_dir(ws.config) / "manifest.json", j.dump(2) + "\n");
}

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

std::vector<GeneratedRecord> run_icl_seed(const Workspace& ws, std::uint64_t seed, RunCounters& counters,
                                          GenerationBackend* external) {
  const auto& cfg = ws.config;
  if (!is_icl(cfg.method)) throw ConfigError("run.method must be an ICL method for gen-icl");
  const auto& docs = ws.train;
  if (docs.size() < 3) throw PipelineError("ICL needs at least three training documents");
  const bool with_codes = cfg.method != Method::BASELINE_ICL;
  const bool enhanced = cfg.method == Method::ICL_ENHANCED;
  if (cfg.decode.max_new_tokens >= cfg.context_len) {
    throw ConfigError("decode.max_new_tokens leaves no room for the prompt in model.context_len");
  }
  const std::size_t budget = cfg.context_len - cfg.decode.max_new_tokens;
  InternalBackend internal(ws.base, nullptr, ws.vocab);

  std::vector<GeneratedRecord> out;
  std::vector<std::size_t> idx(docs.size());
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    const auto sample_seed = derive_seed(seed, i);
    SeededRng rng(sample_seed);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<std::pair<ControlCode, Document>> examples;
    std::vector<ControlCode> codes;
    std::vector<Category> cats;
    GeneratedRecord rec;
    for (std::size_t k = 0; k < 3; ++k) {
      std::swap(idx[k], idx[k + rng.uniform_index(idx.size() - k)]);
      const auto& doc = docs[idx[k]];
      auto code = generator_code(ws, doc);
      for (auto c : code.categories()) {
        if (std::find(cats.begin(), cats.end(), c) == cats.end()) cats.push_back(c);
      }
      codes.push_back(code);
      examples.emplace_back(std::move(code), doc);
      rec.example_ids.push_back(doc.id);
    }
    const ControlCode fictional = with_codes ? sample_fictional(cats, ws.pools, rng) : ControlCode();
    std::vector<std::string> blocked;
    for (const auto& c : codes) {
      for (const auto& v : c.values()) blocked.push_back(v);
    }
    blocked = dedup(blocked);

    DecodeConfig dc = cfg.decode;
    dc.seed = derive_seed(sample_seed, 1);
    if (external) {
      const auto prompt = assemble_icl_prompt_text(examples, fictional, with_codes);
      if (enhanced) {
        auto r = generate_until_clean(*external, prompt, dc, blocked, cfg.max_attempts, cfg.policy);
        rec.text = std::move(r.text);
        rec.attempts = r.attempts;
        if (!r.clean) ++counters.unclean_samples;
      } else {
        rec.text = external->generate(prompt, dc, nullptr).text;
      }
    } else {
      const auto ids = assemble_icl_prompt(examples, fictional, ws.vocab, budget, with_codes);
      BadTokenList bad;
      if (enhanced) {
        bad = build_bad_token_list(codes, ws.vocab);
        counters.unblockable_values += bad.unblockable.size();
      }
      auto g = internal.generate_ids(ids, dc, enhanced ? &bad : nullptr);
      counters.forced_eos += g.forced_eos;
      counters.context_limit_hits += g.hit_context_limit ? 1 : 0;
      rec.text = std::move(g.text);
    }
    rec.sample_id = std::string(to_string(cfg.method)) + "-" + std::to_string(seed) + "-" + std::to_string(i);
    rec.seed = seed;
    rec.method = std::string(to_string(cfg.method));
    rec.fictional_code = render(fictional);
    rec.leak_flag = contains_private(rec.text, blocked, cfg.policy).found;
    out.push_back(std::move(rec));
  }
  return out;
}

void run_icl_experiment(const Workspace& ws) {
  const auto start = std::chrono::steady_clock::now();
  RunCounters counters;
  std::unique_ptr<SubprocessBackend> external;
  if (ws.config.backend == BackendKind::EXTERNAL) {
    external = std::make_unique<SubprocessBackend>(ws.config.external_command);
  }
  std::vector<fs::path> outputs;
  for (auto seed : ws.config.seeds) {
    const auto records = run_icl_seed(ws, seed, counters, external.get());
    const auto path = seed_dir(ws.config, seed) / "outputs.jsonl";
    save_records(path, records);
    outputs.push_back(path);
  }
  write_manifest(ws, outputs, counters, elapsed(start));
}

std::vector<TrainingPair> make_training_pairs(const Workspace& ws, std::size_t* skipped) {
  std::vector<TrainingPair> pairs;
  std::size_t skip = 0;
  const std::size_t room = ws.config.context_len - std::min(ws.config.context_len, ws.config.n_virtual);
  for (const auto& doc : ws.train) {
    Document view{doc.id, doc.text, generator_spans(ws, doc)};
    auto pair = make_training_pair(view, build_control_code(view, generator_classes(ws)), ws.vocab,
                                   generator_classes(ws));
    if (pair.length() > room) {
      ++skip;
      continue;
    }
    pairs.push_back(std::move(pair));
  }
  if (skipped) *skipped = skip;
  return pairs;
}

namespace {

LossWeights weights_for(const RunConfig& c) {
  return c.method == Method::FT ? LossWeights{1.0, 0.0, 0.0} : c.weights;
}

}  // namespace

TrainResult train_prefix_seed(const Workspace& ws, std::uint64_t seed, const std::vector<TrainingPair>& pairs) {
  if (ws.config.method != Method::FT && ws.config.method != Method::FT_MASKED) {
    throw ConfigError("run.method must be ft or ft_masked for prefix training");
  }
  TrainConfig tc = ws.config.train;
  tc.seed = seed;
  tc.n_virtual = ws.config.n_virtual;
  return train_prefix(pairs, ws.base, tc, weights_for(ws.config));
}

std::vector<GeneratedRecord> generate_ft_seed(const Workspace& ws, std::uint64_t seed, const PrefixParams& prefix,
                                              RunCounters& counters) {
  const auto& cfg = ws.config;
  InternalBackend backend(ws.base, &prefix, ws.vocab);
  std::vector<std::string> known;
  for (const auto& d : ws.train) {
    for (const auto& v : generator_code(ws, d).values()) known.push_back(v);
  }
  known = dedup(known);

  std::vector<GeneratedRecord> out;
  for (std::size_t j = 0; j < ws.train.size(); ++j) {
    const auto& doc = ws.train[j];
    const auto sample_seed = derive_seed(seed, j);
    SeededRng rng(derive_seed(sample_seed, 2));
    const auto fictional = sample_fictional(generator_code(ws, doc).categories(), ws.pools, rng);
    std::vector<TokenId> ids{kBos};
    const auto body = tokenize_ids(render(fictional), ws.vocab);
    ids.insert(ids.end(), body.begin(), body.end());
    DecodeConfig dc = cfg.decode;
    dc.seed = derive_seed(sample_seed, 3);
    auto g = backend.generate_ids(ids, dc, nullptr);
    counters.forced_eos += g.forced_eos;
    counters.context_limit_hits += g.hit_context_limit ? 1 : 0;

    GeneratedRecord rec;
    rec.sample_id = std::string(to_string(cfg.method)) + "-" + std::to_string(seed) + "-" + std::to_string(j);
    rec.seed = seed;
    rec.method = std::string(to_string(cfg.method));
    rec.fictional_code = render(fictional);
    rec.text = std::move(g.text);
    rec.source_id = doc.id;
    rec.leak_flag = contains_private(rec.text, known, cfg.policy).found;
    out.push_back(std::move(rec));
  }
  return out;
}

void run_train_prefix(const Workspace& ws) {
  std::size_t skipped = 0;
  const auto pairs = make_training_pairs(ws, &skipped);
  if (pairs.empty()) throw PipelineError("no training pair fits the context");
  for (auto seed : ws.config.seeds) {
    auto res = train_prefix_seed(ws, seed, pairs);
    const auto dir = seed_dir(ws.config, seed);
    fs::create_directories(dir);
    save_prefix(res.prefix, ws.base.dims, dir / "prefix.bin");
    TrainConfig tc = ws.config.train;
    tc.seed = seed;
    auto report = training_report(res, tc, weights_for(ws.config));
    report["skipped_pairs"] = skipped;
    report["pairs"] = pairs.size();
    write_text(dir / "training_report.json", report.dump(2) + "\n");
  }
}

void run_gen_ft(const Workspace& ws) {
  const auto start = std::chrono::steady_clock::now();
  RunCounters counters;
  make_training_pairs(ws, &counters.skipped_pairs);
  std::vector<fs::path> outputs;
  for (auto seed : ws.config.seeds) {
    const auto dir = seed_dir(ws.config, seed);
    const auto prefix = load_prefix(dir / "prefix.bin", ws.base.dims, ws.config.n_virtual);
    const auto records = generate_ft_seed(ws, seed, prefix, counters);
    save_records(dir / "outputs.jsonl", records);
    outputs.push_back(dir / "outputs.jsonl");
  }
  write_manifest(ws, outputs, counters, elapsed(start));
}

Interval mean_ci95(const std::vector<double>& values) {
  Interval r;
  if (values.empty()) return r;
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return r;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.half_width = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return r;
}

SeedMetrics evaluate_seed(const Workspace& ws, std::uint64_t seed, const std::vector<GeneratedRecord>& records) {
  if (records.empty()) throw PipelineError("no generated records for seed " + std::to_string(seed));
  const auto& cfg = ws.config;
  const bool icl = is_icl(cfg.method);
  std::map<std::string, const Document*> by_id;
  for (const auto& d : ws.train) by_id[d.id] = &d;
  auto doc_of = [&](const std::string& id) -> const Document& {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw PipelineError("generated record refers to unknown document " + id);
    return *it->second;
  };

  std::vector<std::string> texts;
  for (const auto& r : records) texts.push_back(r.text);
  const auto training_entities = icl ? std::vector<std::string>{} : gold_training_entities(ws);

  // Samples grouped by source segment; metrics are averaged over groups.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& key_id = icl ? records[i].example_ids.at(0) : records[i].source_id;
    groups[cfg.segment ? segment_key(key_id) : std::string()].push_back(i);
  }

  nlohmann::json samples = nlohmann::json::array();
  std::vector<nlohmann::json> sample_detail(records.size());
  double pipp_sum = 0.0, elp_sum = 0.0, r2_sum = 0.0, rl_sum = 0.0;
  for (const auto& [key, members] : groups) {
    std::vector<std::string> outs;
    std::vector<std::vector<std::string>> per_output;
    double r2 = 0.0, rl = 0.0;
    for (auto i : members) {
      const auto& rec = records[i];
      outs.push_back(rec.text);
      nlohmann::json d = {{"sample_id", rec.sample_id}};
      if (icl) {
        std::vector<std::string> ents;
        std::string reference;
        double best_example = 0.0;
        for (std::size_t k = 0; k < rec.example_ids.size(); ++k) {
          const auto& doc = doc_of(rec.example_ids[k]);
          for (auto& e : gold_entities(ws, doc)) ents.push_back(std::move(e));
          reference += (k ? "\n\n" : "") + doc.text;
          best_example = std::max(best_example, rougeL(rec.text, doc.text));
        }
        per_output.push_back(dedup(ents));
        const double s2 = rouge2(rec.text, reference);
        const double sl = rougeL(rec.text, reference);
        r2 += s2;
        rl += sl;
        d["rouge2"] = s2;
        d["rougeL"] = sl;
        d["rougeL_best_example"] = best_example;
      } else {
        const auto m2 = rouge_vs_training_max(rec.text, ws.train, RougeKind::ROUGE2);
        const auto ml = rouge_vs_training_max(rec.text, ws.train, RougeKind::ROUGEL);
        r2 += m2.score;
        rl += ml.score;
        d["rouge2"] = m2.score;
        d["rouge2_doc"] = m2.doc_id;
        d["rougeL"] = ml.score;
        d["rougeL_doc"] = ml.doc_id;
      }
      sample_detail[i] = std::move(d);
    }
    const auto leak = icl ? leakage_icl(outs, per_output, cfg.policy) : leakage_ft(outs, training_entities, cfg.policy);
    for (std::size_t k = 0; k < members.size(); ++k) {
      sample_detail[members[k]]["leak_flag"] = static_cast<bool>(leak.flags[k]);
      sample_detail[members[k]]["matched"] = leak.matched[k];
    }
    const double n = static_cast<double>(members.size());
    pipp_sum += leak.pipp;
    elp_sum += leak.elp;
    r2_sum += r2 / n;
    rl_sum += rl / n;
  }
  for (auto& d : sample_detail) samples.push_back(std::move(d));
  const double g = static_cast<double>(groups.size());

  // Utility: a copy of the base model fine-tuned on the outputs, scored on the test set.
  double ppl = 0.0;
  double js = 0.0;
  if (!ws.test.empty()) {
    std::vector<std::vector<TokenId>> seqs;
    for (const auto& t : texts) {
      auto s = with_bos_eos(tokenize_ids(t, ws.vocab));
      if (s.size() > cfg.context_len) s.resize(cfg.context_len);
      seqs.push_back(std::move(s));
    }
    LmTrainConfig uc;
    uc.epochs = cfg.utility_epochs;
    uc.learning_rate = cfg.utility_learning_rate;
    uc.seed = derive_seed(seed, 7);
    const auto model = train_lm(ws.base, seqs, uc).params;
    std::vector<std::vector<TokenId>> test_ids;
    std::vector<std::string> test_texts;
    for (const auto& d : ws.test) {
      test_ids.push_back(tokenize_ids(d.text, ws.vocab));
      test_texts.push_back(d.text);
    }
    ppl = perplexity(model, nullptr, test_ids).perplexity;
    js = unigram_js_divergence(texts, test_texts);
  }

  SeedMetrics m;
  m.row = {cfg.run_id, std::string(to_string(cfg.method)), setting_label(cfg), pipp_sum / g, elp_sum / g, r2_sum / g,
           rl_sum / g, ppl, js, static_cast<double>(records.size()), std::to_string(seed)};
  m.detail = {{"seed", seed}, {"groups", groups.size()}, {"samples", std::move(samples)}};
  return m;
}

EvalResult evaluate_run(const Workspace& ws) {
  EvalResult res;
  res.detail = {{"run_id", ws.config.run_id},
                {"method", std::string(to_string(ws.config.method))},
                {"setting", setting_label(ws.config)},
                {"match_policy", std::string(to_string(ws.config.policy.case_sensitivity))},
                {"rouge_reference", is_icl(ws.config.method) ? "concatenated context" : "max over training"},
                {"seeds", nlohmann::json::array()}};
  for (auto seed : ws.config.seeds) {
    const auto records = load_records(seed_dir(ws.config, seed) / "outputs.jsonl");
    auto m = evaluate_seed(ws, seed, records);
    res.rows.push_back(m.row);
    res.detail["seeds"].push_back(std::move(m.detail));
  }
  auto agg = [&](auto field) {
    std::vector<double> v;
    for (const auto& r : res.rows) v.push_back(r.*field);
    return mean_ci95(v);
  };
  MetricsRow mean = res.rows.front();
  MetricsRow ci = res.rows.front();
  for (auto field : {&MetricsRow::pipp, &MetricsRow::elp, &MetricsRow::rouge2, &MetricsRow::rougeL,
                     &MetricsRow::perplexity, &MetricsRow::js_proxy, &MetricsRow::n_samples}) {
    const auto iv = agg(field);
    mean.*field = iv.mean;
    ci.*field = iv.half_width;
  }
  mean.seed = "mean";
  ci.seed = "ci95";
  res.rows.push_back(mean);
  res.rows.push_back(ci);
  write_text(method_dir(ws.config) / "metrics.csv", metrics_csv(res.rows));
  write_text(method_dir(ws.config) / "detail.json", res.detail.dump(2) + "\n");
  return res;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "run_id,method,setting,pipp,elp,rouge2,rougeL,perplexity,js_proxy,n_samples,seed\n";
  char buf[64];
  for (const auto& r : rows) {
    out += r.run_id + "," + r.method + "," + r.setting;
    for (double v : {r.pipp, r.elp, r.rouge2, r.rougeL, r.perplexity, r.js_proxy, r.n_samples}) {
      std::snprintf(buf, sizeof buf, ",%.6f", v);
      out += buf;
    }
    out += "," + r.seed + "\n";
  }
  return out;
}

std::string csv_to_markdown(const std::string& csv) {
  std::string out;
  bool header = true;
  for (const auto& line : split(csv, "\n")) {
    if (trim(line).empty()) continue;
    const auto cells = split(line, ",");
    out += "|";
    for (const auto& c : cells) out += " " + c + " |";
    out += "\n";
    if (header) {
      out += "|";
      for (std::size_t i = 0; i < cells.size(); ++i) out += " --- |";
      out += "\n";
      header = false;
    }
  }
  return out;
}

std::vector<std::string> sample_memorizer(const Workspace& ws, std::uint64_t seed, std::size_t epochs,
                                          double learning_rate, std::size_t n_outputs) {
  std::vector<std::vector<TokenId>> seqs;
  for (const auto& d : ws.train) {
    auto s = with_bos_eos(tokenize_ids(d.text, ws.vocab));
    if (s.size() <= ws.base.dims.context_len) seqs.push_back(std::move(s));
  }
  LmTrainConfig tc;
  tc.epochs = epochs;
  tc.learning_rate = learning_rate;
  tc.seed = derive_seed(seed, 9);
  const auto model = train_lm(init_params(derive_seed(seed, 8), ws.base.dims), seqs, tc).params;
  InternalBackend backend(model, nullptr, ws.vocab);
  std::vector<std::string> out;
  const std::vector<TokenId> prompt{kBos};
  for (std::size_t i = 0; i < n_outputs; ++i) {
    DecodeConfig dc = ws.config.decode;
    dc.seed = derive_seed(seed, 100 + i);
    out.push_back(backend.generate_ids(prompt, dc, nullptr).text);
  }
  return out;
}

}  // namespace hipsgen

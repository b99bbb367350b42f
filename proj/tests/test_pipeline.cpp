#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hipsgen/pipeline.hpp"

using namespace hipsgen;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path& root() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "hg_pipeline_test";
    fs::remove_all(d);
    PlantedConfig pc;
    pc.train_docs = 12;
    pc.test_docs = 4;
    pc.public_docs = 40;
    write_planted_corpus(pc, d / "data");
    return d;
  }();
  return dir;
}

RunConfig tiny(Method method, const std::string& out) {
  RunConfig c;
  c.run_id = "tiny";
  c.method = method;
  c.identifier_classes = ClassSet::both();
  c.seeds = {1, 2};
  c.output_dir = root() / out;
  c.train_path = root() / "data/train.jsonl";
  c.test_path = root() / "data/test.jsonl";
  c.public_path = root() / "data/public.jsonl";
  c.vocab_path = root() / "model/vocab.txt";
  c.base_model_path = root() / "model/base.bin";
  c.loc_gazetteer_path = root() / "data/loc_gazetteer.txt";
  c.org_gazetteer_path = root() / "data/org_gazetteer.txt";
  c.d_model = 16;
  c.context_len = 400;
  c.n_virtual = 4;
  c.pretrain_epochs = 1;
  c.decode.max_new_tokens = 16;
  c.n_samples = 4;
  c.train.epochs = 1;
  c.train.batch_size = 4;
  c.train.n_virtual = 4;
  c.utility_epochs = 1;
  return c;
}

const Workspace& workspace(Method method) {
  static const bool pretrained = [] {
    run_pretrain(tiny(Method::ICL, "unused"));
    return true;
  }();
  (void)pretrained;
  static std::map<Method, Workspace> cache;
  auto it = cache.find(method);
  if (it == cache.end()) it = cache.emplace(method, load_workspace(tiny(method, "runs"))).first;
  return it->second;
}

}  // namespace

TEST_CASE("workspace loading") {
  const auto& ws = workspace(Method::ICL);
  CHECK(ws.train.size() == 12);
  CHECK(ws.test.size() == 4);
  CHECK(ws.vocab.contains("PERSON"));
  CHECK(ws.base.dims.d_model == 16);
  CHECK_FALSE(ws.recognizer.loc_gazetteer.empty());

  auto bad = tiny(Method::ICL, "runs");
  bad.vocab_path = root() / "missing/vocab.txt";
  CHECK_THROWS(load_workspace(bad));
}

TEST_CASE("baseline prompts carry no control codes") {
  const auto& ws = workspace(Method::BASELINE_ICL);
  RunCounters counters;
  for (const auto& r : run_icl_seed(ws, 1, counters)) {
    CHECK(r.fictional_code.empty());
    CHECK(r.example_ids.size() == 3);
  }
}

TEST_CASE("enhanced ICL outputs are never flagged") {
  const auto& ws = workspace(Method::ICL_ENHANCED);
  RunCounters counters;
  const auto records = run_icl_seed(ws, 3, counters);
  CHECK(records.size() == 4);
  for (const auto& r : records) {
    CHECK_FALSE(r.leak_flag);
    CHECK_FALSE(r.fictional_code.empty());
    CHECK(r.attempts == 1);
  }
}

TEST_CASE("ICL reruns are byte-identical") {
  auto a = tiny(Method::ICL, "rerun-a");
  auto b = tiny(Method::ICL, "rerun-b");
  run_icl_experiment(load_workspace(a));
  run_icl_experiment(load_workspace(b));
  for (auto seed : a.seeds) {
    const auto pa = seed_dir(a, seed) / "outputs.jsonl";
    const auto pb = seed_dir(b, seed) / "outputs.jsonl";
    REQUIRE(fs::exists(pa));
    CHECK(slurp(pa) == slurp(pb));
  }
  CHECK(fs::exists(method_dir(a) / "manifest.json"));
}

TEST_CASE("fine-tuning produces one output per training document") {
  const auto& ws = workspace(Method::FT_MASKED);
  run_train_prefix(ws);
  run_gen_ft(ws);
  std::size_t skipped = 0;
  const auto pairs = make_training_pairs(ws, &skipped);
  CHECK(pairs.size() + skipped == ws.train.size());
  for (auto seed : ws.config.seeds) {
    const auto records = load_records(seed_dir(ws.config, seed) / "outputs.jsonl");
    REQUIRE(records.size() == ws.train.size());
    for (std::size_t i = 0; i < records.size(); ++i) CHECK(records[i].source_id == ws.train[i].id);
    CHECK(fs::exists(seed_dir(ws.config, seed) / "training_report.json"));
  }
  const auto manifest = nlohmann::json::parse(slurp(method_dir(ws.config) / "manifest.json"));
  CHECK(manifest["warnings"]["skipped_pairs"] == skipped);

  const auto res = evaluate_run(ws);
  REQUIRE(res.rows.size() == ws.config.seeds.size() + 2);
  CHECK(res.rows[2].seed == "mean");
  CHECK(res.rows[3].seed == "ci95");
  for (const auto& r : res.rows) {
    CHECK(r.pipp >= 0.0);
    CHECK(r.pipp <= 100.0);
  }
  CHECK(res.rows[0].perplexity > 1.0);
  CHECK(fs::exists(method_dir(ws.config) / "metrics.csv"));
}

TEST_CASE("ft equals ft_masked with lm-only weights") {
  const auto& ft = workspace(Method::FT);
  Workspace masked = workspace(Method::FT_MASKED);
  masked.config.weights = {1.0, 0.0, 0.0};
  const auto pairs = make_training_pairs(ft, nullptr);
  const auto a = train_prefix_seed(ft, 5, pairs);
  const auto b = train_prefix_seed(masked, 5, pairs);
  CHECK(a.prefix == b.prefix);
  CHECK_THROWS_AS(train_prefix_seed(workspace(Method::ICL), 5, pairs), ConfigError);
}

TEST_CASE("unknown setting reads spans from the recognizer") {
  auto cfg = tiny(Method::ICL, "runs");
  cfg.entity_setting = EntitySetting::UNKNOWN;
  const auto ws = load_workspace(cfg);
  for (const auto& d : ws.train) CHECK(generator_spans(ws, d) == recognize(d.text, ws.recognizer));
  CHECK(generator_classes(ws) == ClassSet::direct_only());
}

TEST_CASE("segmentation keeps documents addressable") {
  auto cfg = tiny(Method::ICL, "runs");
  cfg.segment = true;
  const auto ws = load_workspace(cfg);
  CHECK(ws.train.size() >= ws.train_original.size());
  for (const auto& d : ws.train) {
    for (const auto& e : gold_entities(ws, d)) CHECK(d.text.find(e) != std::string::npos);
  }
}

TEST_CASE("records round trip through JSON") {
  GeneratedRecord r;
  r.sample_id = "icl-1-0";
  r.seed = 1;
  r.method = "icl";
  r.fictional_code = "PERSON: Dr Logan Ellis\n";
  r.text = "line one\nline \"two\"";
  r.attempts = 2;
  r.leak_flag = true;
  r.example_ids = {"a", "b", "c"};
  const auto back = GeneratedRecord::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  const auto p = root() / "records.jsonl";
  save_records(p, {r, r});
  CHECK(load_records(p).size() == 2);
  std::ofstream(p, std::ios::app) << "{broken\n";
  CHECK_THROWS_WITH_AS(load_records(p), doctest::Contains(":3"), PipelineError);
}

TEST_CASE("aggregation helpers") {
  const auto iv = mean_ci95({1.0, 2.0, 3.0});
  CHECK(iv.mean == doctest::Approx(2.0));
  CHECK(iv.half_width == doctest::Approx(1.96 / std::sqrt(3.0)));
  CHECK(mean_ci95({4.0}).half_width == 0.0);

  MetricsRow row{"r", "icl", "known:DIRECT", 50, 12.5, 0.1, 0.2, 30, 0.4, 40, "1"};
  const auto csv = metrics_csv({row});
  CHECK(csv ==
        "run_id,method,setting,pipp,elp,rouge2,rougeL,perplexity,js_proxy,n_samples,seed\n"
        "r,icl,known:DIRECT,50.000000,12.500000,0.100000,0.200000,30.000000,0.400000,40.000000,1\n");
  const auto md = csv_to_markdown(csv);
  CHECK(md.starts_with("| run_id | method |"));
  CHECK(md.find("| --- |") != std::string::npos);
  CHECK(md.find("| r | icl |") != std::string::npos);
}

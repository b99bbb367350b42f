#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hipsgen/config.hpp"
#include "hipsgen/control_code.hpp"
#include "hipsgen/corpus.hpp"
#include "hipsgen/decoding.hpp"
#include "hipsgen/deid.hpp"
#include "hipsgen/fictional.hpp"
#include "hipsgen/lm.hpp"
#include "hipsgen/planted.hpp"
#include "hipsgen/tokenizer.hpp"
#include "hipsgen/training.hpp"

namespace hipsgen {

inline constexpr const char* kArtifactVersion = "hipsgen 0.1.0";

struct PipelineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Writes train.jsonl, test.jsonl, public.jsonl and the two gazetteers.
void write_planted_corpus(const PlantedConfig& config, const std::filesystem::path& dir);

// Vocabulary over train, test and public texts plus every fictional pool
// word and the control-code syntax.
Vocabulary build_pipeline_vocab(const std::vector<Document>& train, const std::vector<Document>& test,
                                const std::vector<Document>& public_docs, const FictionalPools& pools,
                                std::size_t min_freq);

// Public pretraining sequences: BOS, one to three "code + document" blocks
// separated by blank lines, EOS.
std::vector<std::vector<TokenId>> pretraining_sequences(const std::vector<Document>& public_docs,
                                                        const Vocabulary& vocab, std::size_t context_len,
                                                        std::uint64_t seed);

struct PretrainResult {
  Vocabulary vocab;
  LmParams base;
  std::vector<double> epoch_loss;
};

PretrainResult pretrain_base(const RunConfig& config);
// pretrain_base() and save vocab + weights to the configured paths.
PretrainResult run_pretrain(const RunConfig& config);

struct Workspace {
  RunConfig config;
  Vocabulary vocab;
  LmParams base;
  std::vector<Document> train;           // segmented when configured
  std::vector<Document> train_original;  // as loaded
  std::vector<Document> test;
  FictionalPools pools;
  RecognizerConfig recognizer;
  std::size_t dropped_spans = 0;
};

Workspace load_workspace(const RunConfig& config);

// Spans the generator may see: gold spans in the known setting, recognizer
// output otherwise.
std::vector<EntitySpan> generator_spans(const Workspace& ws, const Document& doc);
ClassSet generator_classes(const Workspace& ws);
ControlCode generator_code(const Workspace& ws, const Document& doc);

// Gold evaluation entities of a (possibly segmented) training document.
std::vector<std::string> gold_entities(const Workspace& ws, const Document& doc);
std::vector<std::string> gold_training_entities(const Workspace& ws);

void run_build_codes(const Workspace& ws, const std::filesystem::path& out);

struct GeneratedRecord {
  std::string sample_id;
  std::uint64_t seed = 0;
  std::string method;
  std::string fictional_code;
  std::string text;
  std::size_t attempts = 1;
  bool leak_flag = false;
  std::vector<std::string> example_ids;  // ICL
  std::string source_id;                 // fine-tuning

  nlohmann::json to_json() const;
  static GeneratedRecord from_json(const nlohmann::json& j);
};

struct RunCounters {
  std::size_t forced_eos = 0;
  std::size_t unblockable_values = 0;
  std::size_t context_limit_hits = 0;
  std::size_t unclean_samples = 0;
  std::size_t skipped_pairs = 0;
  std::size_t clamps = 0;

  nlohmann::json to_json() const;
};

std::filesystem::path method_dir(const RunConfig& config);
std::filesystem::path seed_dir(const RunConfig& config, std::uint64_t seed);

std::vector<GeneratedRecord> run_icl_seed(const Workspace& ws, std::uint64_t seed, RunCounters& counters,
                                          GenerationBackend* external = nullptr);
// All seeds; writes outputs.jsonl per seed and the manifest.
void run_icl_experiment(const Workspace& ws);

// Pairs whose length exceeds the context are skipped and counted.
std::vector<TrainingPair> make_training_pairs(const Workspace& ws, std::size_t* skipped);
TrainResult train_prefix_seed(const Workspace& ws, std::uint64_t seed, const std::vector<TrainingPair>& pairs);
std::vector<GeneratedRecord> generate_ft_seed(const Workspace& ws, std::uint64_t seed, const PrefixParams& prefix,
                                              RunCounters& counters);
void run_train_prefix(const Workspace& ws);
void run_gen_ft(const Workspace& ws);

std::vector<GeneratedRecord> load_records(const std::filesystem::path& path);
void save_records(const std::filesystem::path& path, const std::vector<GeneratedRecord>& records);

struct MetricsRow {
  std::string run_id;
  std::string method;
  std::string setting;
  double pipp = 0.0;
  double elp = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double perplexity = 0.0;
  double js_proxy = 0.0;
  double n_samples = 0.0;
  std::string seed;
};

struct Interval {
  double mean = 0.0;
  double half_width = 0.0;  // 1.96 sd / sqrt(n)
};

Interval mean_ci95(const std::vector<double>& values);

struct SeedMetrics {
  MetricsRow row;
  nlohmann::json detail;
};

SeedMetrics evaluate_seed(const Workspace& ws, std::uint64_t seed, const std::vector<GeneratedRecord>& records);

struct EvalResult {
  std::vector<MetricsRow> rows;  // per seed, then "mean" and "ci95"
  nlohmann::json detail;
};

// Reads the run's outputs and writes metrics.csv and detail.json next to them.
EvalResult evaluate_run(const Workspace& ws);

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string csv_to_markdown(const std::string& csv);

// Fresh LM trained to memorize the training documents, sampled without
// conditioning. Serves as the leakage upper reference.
std::vector<std::string> sample_memorizer(const Workspace& ws, std::uint64_t seed, std::size_t epochs,
                                          double learning_rate, std::size_t n_outputs);

}  // namespace hipsgen

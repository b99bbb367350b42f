#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hipsgen/corpus.hpp"
#include "hipsgen/decoding.hpp"
#include "hipsgen/metrics.hpp"
#include "hipsgen/training.hpp"

namespace hipsgen {

// Invalid configuration or arguments; the CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sectioned key = value text. '#' and ';' start comment lines.
class Ini {
 public:
  static Ini parse(std::string_view text, const std::string& origin = "<config>");
  static Ini load(const std::filesystem::path& path);

  void set(const std::string& section, const std::string& key, const std::string& value);
  // "section.key=value"
  void set_override(std::string_view assignment);
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  const std::map<std::string, std::map<std::string, std::string>>& sections() const { return data_; }
  std::string serialize() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> data_;
};

enum class Method { BASELINE_ICL, ICL, ICL_ENHANCED, FT, FT_MASKED };
enum class EntitySetting { KNOWN, UNKNOWN };
enum class BackendKind { INTERNAL, EXTERNAL };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);
bool is_icl(Method m);
std::string_view to_string(EntitySetting s);
EntitySetting parse_entity_setting(std::string_view s);

struct RunConfig {
  // [run]
  std::string run_id = "run";
  Method method = Method::ICL;
  EntitySetting entity_setting = EntitySetting::KNOWN;
  ClassSet identifier_classes = ClassSet::direct_only();
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::filesystem::path output_dir = "out";
  BackendKind backend = BackendKind::INTERNAL;
  std::vector<std::string> external_command;
  std::size_t max_attempts = 5;

  // [corpus]
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::filesystem::path public_path;
  std::filesystem::path vocab_path;
  std::filesystem::path base_model_path;
  std::filesystem::path pools_path;
  std::filesystem::path loc_gazetteer_path;
  std::filesystem::path org_gazetteer_path;
  bool segment = false;
  std::size_t segment_boundary = 6;
  std::size_t segment_limit = 12;
  std::size_t vocab_min_freq = 2;

  // [model]
  std::size_t d_model = 64;
  std::size_t context_len = 192;
  std::size_t n_virtual = kDefaultVirtualTokens;
  std::uint64_t model_seed = 7;
  std::size_t pretrain_epochs = 12;
  double pretrain_learning_rate = 3e-3;

  // [decode]
  DecodeConfig decode;
  std::size_t n_samples = 40;  // ICL targets per seed

  // [train]
  TrainConfig train;

  // [loss]
  LossWeights weights;

  // [eval]
  MatchPolicy policy;
  std::size_t utility_epochs = 3;
  double utility_learning_rate = 1e-3;

  void validate() const;
};

RunConfig run_config_from_ini(const Ini& ini);
Ini run_config_to_ini(const RunConfig& config);

}  // namespace hipsgen

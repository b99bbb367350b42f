#include "hipsgen/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "hipsgen/text.hpp"

namespace hipsgen {

Ini Ini::parse(std::string_view text, const std::string& origin) {
  Ini ini;
  std::string section;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, "\n")) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      ini.data_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside of a section");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (ini.data_[section].count(key)) throw ConfigError(where + ": duplicate key " + section + "." + key);
    ini.data_[section][key] = trim(line.substr(eq + 1));
  }
  return ini;
}

Ini Ini::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Ini::set(const std::string& section, const std::string& key, const std::string& value) {
  data_[section][key] = value;
}

void Ini::set_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like section.key=value");
  }
  set(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
      trim(assignment.substr(eq + 1)));
}

std::optional<std::string> Ini::get(const std::string& section, const std::string& key) const {
  auto s = data_.find(section);
  if (s == data_.end()) return std::nullopt;
  auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

std::string Ini::serialize() const {
  std::string out;
  for (const auto& [section, keys] : data_) {
    if (!out.empty()) out += "\n";
    out += "[" + section + "]\n";
    for (const auto& [k, v] : keys) out += k + " = " + v + "\n";
  }
  return out;
}

namespace {

const std::vector<std::pair<Method, std::string_view>> kMethods = {{Method::BASELINE_ICL, "baseline_icl"},
                                                                   {Method::ICL, "icl"},
                                                                   {Method::ICL_ENHANCED, "icl_enhanced"},
                                                                   {Method::FT, "ft"},
                                                                   {Method::FT_MASKED, "ft_masked"}};

}  // namespace

std::string_view to_string(Method m) {
  for (const auto& [k, v] : kMethods) {
    if (k == m) return v;
  }
  return "?";
}

Method parse_method(std::string_view s) {
  for (const auto& [k, v] : kMethods) {
    if (v == s) return k;
  }
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

bool is_icl(Method m) { return m == Method::BASELINE_ICL || m == Method::ICL || m == Method::ICL_ENHANCED; }

std::string_view to_string(EntitySetting s) { return s == EntitySetting::KNOWN ? "known" : "unknown"; }

EntitySetting parse_entity_setting(std::string_view s) {
  if (s == "known") return EntitySetting::KNOWN;
  if (s == "unknown") return EntitySetting::UNKNOWN;
  throw ConfigError("unknown entity_setting '" + std::string(s) + "'");
}

void RunConfig::validate() const {
  if (seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  if (!identifier_classes.direct && !identifier_classes.quasi) {
    throw ConfigError("run.identifier_classes must name DIRECT and/or QUASI");
  }
  if (backend == BackendKind::EXTERNAL && external_command.empty()) {
    throw ConfigError("run.external_command is required for the external backend");
  }
  if (backend == BackendKind::EXTERNAL && !is_icl(method)) {
    throw ConfigError("the external backend only serves ICL methods");
  }
  if (max_attempts == 0) throw ConfigError("run.max_attempts must be at least 1");
  if (segment_boundary == 0 || segment_limit <= segment_boundary) {
    throw ConfigError("corpus.segment_limit must exceed corpus.segment_boundary > 0");
  }
  if (vocab_min_freq == 0) throw ConfigError("corpus.vocab_min_freq must be at least 1");
  if (d_model < 8) throw ConfigError("model.d_model must be at least 8");
  if (context_len < n_virtual + 2) throw ConfigError("model.context_len must be at least n_virtual + 2");
  if (n_samples == 0) throw ConfigError("decode.n_samples must be at least 1");
  if (utility_epochs == 0 || !(utility_learning_rate > 0.0)) throw ConfigError("eval utility settings must be positive");
  try {
    decode.validate();
    train.validate();
    weights.validate();
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(sec, name, member)                                                                 \
  Field {                                                                                             \
    sec, name, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_u64(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                                   \
  }
#define REAL_FIELD(sec, name, member)                                                                     \
  Field {                                                                                                 \
    sec, name, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); }, \
        [](const RunConfig& c) { return fmt(c.member); }                                                  \
  }
#define PATH_FIELD(sec, name, member)                                                         \
  Field {                                                                                     \
    sec, name, [](RunConfig& c, const std::string&, const std::string& v) { c.member = v; }, \
        [](const RunConfig& c) { return c.member.string(); }                                  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"run", "run_id", [](RunConfig& c, const std::string&, const std::string& v) { c.run_id = v; },
       [](const RunConfig& c) { return c.run_id; }},
      {"run", "method", [](RunConfig& c, const std::string&, const std::string& v) { c.method = parse_method(v); },
       [](const RunConfig& c) { return std::string(to_string(c.method)); }},
      {"run", "entity_setting",
       [](RunConfig& c, const std::string&, const std::string& v) { c.entity_setting = parse_entity_setting(v); },
       [](const RunConfig& c) { return std::string(to_string(c.entity_setting)); }},
      {"run", "identifier_classes",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.identifier_classes = parse_class_set(v);
         } catch (const std::runtime_error& e) {
           throw ConfigError(k + ": " + e.what());
         }
       },
       [](const RunConfig& c) { return to_string(c.identifier_classes); }},
      {"run", "seeds",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.seeds.clear();
         for (const auto& s : split(v, ",")) c.seeds.push_back(to_u64(k, trim(s)));
       },
       [](const RunConfig& c) {
         std::vector<std::string> parts;
         for (auto s : c.seeds) parts.push_back(std::to_string(s));
         return join(parts, ",");
       }},
      PATH_FIELD("run", "output_dir", output_dir),
      {"run", "backend",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "internal") {
           c.backend = BackendKind::INTERNAL;
         } else if (v == "external") {
           c.backend = BackendKind::EXTERNAL;
         } else {
           throw ConfigError(k + ": expected internal or external, got '" + v + "'");
         }
       },
       [](const RunConfig& c) { return std::string(c.backend == BackendKind::INTERNAL ? "internal" : "external"); }},
      {"run", "external_command",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.external_command.clear();
         std::istringstream ss(v);
         for (std::string part; ss >> part;) c.external_command.push_back(part);
       },
       [](const RunConfig& c) { return join(c.external_command, " "); }},
      SIZE_FIELD("run", "max_attempts", max_attempts),
      PATH_FIELD("corpus", "train", train_path),
      PATH_FIELD("corpus", "test", test_path),
      PATH_FIELD("corpus", "public", public_path),
      PATH_FIELD("corpus", "vocab", vocab_path),
      PATH_FIELD("corpus", "base_model", base_model_path),
      PATH_FIELD("corpus", "pools", pools_path),
      PATH_FIELD("corpus", "loc_gazetteer", loc_gazetteer_path),
      PATH_FIELD("corpus", "org_gazetteer", org_gazetteer_path),
      {"corpus", "segment",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.segment = to_bool(k, v); },
       [](const RunConfig& c) { return std::string(c.segment ? "true" : "false"); }},
      SIZE_FIELD("corpus", "segment_boundary", segment_boundary),
      SIZE_FIELD("corpus", "segment_limit", segment_limit),
      SIZE_FIELD("corpus", "vocab_min_freq", vocab_min_freq),
      SIZE_FIELD("model", "d_model", d_model),
      SIZE_FIELD("model", "context_len", context_len),
      SIZE_FIELD("model", "n_virtual", n_virtual),
      SIZE_FIELD("model", "seed", model_seed),
      SIZE_FIELD("model", "pretrain_epochs", pretrain_epochs),
      REAL_FIELD("model", "pretrain_learning_rate", pretrain_learning_rate),
      SIZE_FIELD("decode", "max_new_tokens", decode.max_new_tokens),
      REAL_FIELD("decode", "temperature", decode.temperature),
      REAL_FIELD("decode", "top_p", decode.top_p),
      SIZE_FIELD("decode", "n_samples", n_samples),
      SIZE_FIELD("train", "epochs", train.epochs),
      REAL_FIELD("train", "learning_rate", train.learning_rate),
      SIZE_FIELD("train", "batch_size", train.batch_size),
      REAL_FIELD("train", "clip_norm", train.clip_norm),
      {"train", "contrastive_sign",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         auto s = parse_contrastive_sign(v);
         if (!s) throw ConfigError(k + ": expected as_written or negated, got '" + v + "'");
         c.train.contrastive_sign = *s;
       },
       [](const RunConfig& c) { return std::string(to_string(c.train.contrastive_sign)); }},
      {"train", "mask_lm",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.mask_lm = to_bool(k, v); },
       [](const RunConfig& c) { return std::string(c.train.mask_lm ? "true" : "false"); }},
      REAL_FIELD("loss", "lm", weights.lm),
      REAL_FIELD("loss", "contrastive", weights.contrastive),
      REAL_FIELD("loss", "kl", weights.kl),
      {"eval", "case_sensitivity",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.policy.case_sensitivity = parse_case_sensitivity(v);
         } catch (const MetricsError&) {
           throw ConfigError(k + ": expected insensitive or sensitive, got '" + v + "'");
         }
       },
       [](const RunConfig& c) { return std::string(to_string(c.policy.case_sensitivity)); }},
      SIZE_FIELD("eval", "utility_epochs", utility_epochs),
      REAL_FIELD("eval", "utility_learning_rate", utility_learning_rate),
  };
  return f;
}

#undef SIZE_FIELD
#undef REAL_FIELD
#undef PATH_FIELD

}  // namespace

RunConfig run_config_from_ini(const Ini& ini) {
  RunConfig c;
  for (const auto& [section, keys] : ini.sections()) {
    for (const auto& [key, value] : keys) {
      const auto name = section + "." + key;
      const Field* field = nullptr;
      for (const auto& f : fields()) {
        if (f.section == section && f.key == key) field = &f;
      }
      if (!field) throw ConfigError("unknown config key " + name);
      field->set(c, name, value);
    }
  }
  c.train.n_virtual = c.n_virtual;
  c.validate();
  return c;
}

Ini run_config_to_ini(const RunConfig& config) {
  Ini ini;
  for (const auto& f : fields()) ini.set(f.section, f.key, f.get(config));
  return ini;
}

}  // namespace hipsgen

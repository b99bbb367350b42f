#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hipsgen/config.hpp"
#include "hipsgen/pipeline.hpp"

namespace fs = std::filesystem;
using namespace hipsgen;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "config file (sectioned key = value)")->required();
  cmd->add_option("-s,--set", c.overrides, "override, e.g. decode.top_p=0.8");
}

RunConfig load(const Common& c) {
  auto ini = Ini::load(c.config);
  for (const auto& o : c.overrides) ini.set_override(o);
  return run_config_from_ini(ini);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-aware synthetic text generation with control codes"};
  app.require_subcommand(1);

  PlantedConfig planted;
  std::string corpus_out = "data";
  auto* gen_corpus = app.add_subcommand("gen-corpus", "write the planted-identifier corpus");
  gen_corpus->add_option("-o,--out", corpus_out, "output directory");
  gen_corpus->add_option("--train", planted.train_docs);
  gen_corpus->add_option("--test", planted.test_docs);
  gen_corpus->add_option("--public", planted.public_docs);
  gen_corpus->add_option("--seed", planted.seed);

  Common pre, codes, icl, tp, ft, ev, rep;
  auto* pretrain = app.add_subcommand("pretrain", "build the vocabulary and pretrain the base model");
  add_common(pretrain, pre);

  std::string codes_out;
  auto* build_codes = app.add_subcommand("build-codes", "write control codes for the training corpus");
  add_common(build_codes, codes);
  build_codes->add_option("-o,--out", codes_out, "JSONL output (default <output_dir>/codes.jsonl)");

  auto* gen_icl = app.add_subcommand("gen-icl", "generate with in-context prompting");
  add_common(gen_icl, icl);
  auto* train_prefix_cmd = app.add_subcommand("train-prefix", "train the virtual-token prefix");
  add_common(train_prefix_cmd, tp);
  auto* gen_ft = app.add_subcommand("gen-ft", "generate with the trained prefix");
  add_common(gen_ft, ft);
  auto* eval = app.add_subcommand("eval", "compute leakage and utility metrics");
  add_common(eval, ev);

  std::vector<std::string> report_csv;
  std::string report_out;
  auto* report = app.add_subcommand("report", "render metrics CSV files as a markdown table");
  report->add_option("-c,--config", rep.config, "config file; reads the run's metrics.csv");
  report->add_option("-s,--set", rep.overrides);
  report->add_option("--csv", report_csv, "metrics CSV file(s)");
  report->add_option("-o,--out", report_out, "write markdown here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen_corpus->parsed()) {
      write_planted_corpus(planted, corpus_out);
      std::cout << "wrote planted corpus to " << corpus_out << "\n";
    } else if (pretrain->parsed()) {
      const auto r = run_pretrain(load(pre));
      std::cout << "vocabulary " << r.vocab.size() << " tokens, final pretraining loss "
                << (r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back()) << "\n";
    } else if (build_codes->parsed()) {
      const auto ws = load_workspace(load(codes));
      const fs::path out = codes_out.empty() ? ws.config.output_dir / "codes.jsonl" : fs::path(codes_out);
      run_build_codes(ws, out);
      std::cout << "wrote " << out.string() << "\n";
    } else if (gen_icl->parsed()) {
      const auto ws = load_workspace(load(icl));
      if (!is_icl(ws.config.method)) throw ConfigError("gen-icl needs run.method baseline_icl, icl or icl_enhanced");
      run_icl_experiment(ws);
      std::cout << "wrote " << method_dir(ws.config).string() << "\n";
    } else if (train_prefix_cmd->parsed()) {
      const auto ws = load_workspace(load(tp));
      if (is_icl(ws.config.method)) throw ConfigError("train-prefix needs run.method ft or ft_masked");
      run_train_prefix(ws);
      std::cout << "wrote prefixes under " << method_dir(ws.config).string() << "\n";
    } else if (gen_ft->parsed()) {
      const auto ws = load_workspace(load(ft));
      if (is_icl(ws.config.method)) throw ConfigError("gen-ft needs run.method ft or ft_masked");
      run_gen_ft(ws);
      std::cout << "wrote " << method_dir(ws.config).string() << "\n";
    } else if (eval->parsed()) {
      const auto ws = load_workspace(load(ev));
      const auto res = evaluate_run(ws);
      std::cout << metrics_csv(res.rows);
    } else if (report->parsed()) {
      std::vector<fs::path> files(report_csv.begin(), report_csv.end());
      if (!rep.config.empty()) files.push_back(method_dir(load(rep)) / "metrics.csv");
      if (files.empty()) throw ConfigError("report needs --config or --csv");
      std::string csv;
      for (std::size_t i = 0; i < files.size(); ++i) {
        const auto text = slurp(files[i]);
        csv += i == 0 ? text : text.substr(std::min(text.size(), text.find('\n') + 1));
      }
      const auto md = csv_to_markdown(csv);
      if (report_out.empty()) {
        std::cout << md;
      } else {
        std::ofstream(report_out) << md;
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CorpusError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

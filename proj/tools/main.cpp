#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "attachrec/errors.hpp"
#include "attachrec/pipeline.hpp"

namespace {

const std::map<std::string, std::string>& stage_descriptions() {
  static const std::map<std::string, std::string> d = {
      {"synth", "generate a planted-signal corpus (corpus.jsonl)"},
      {"ingest", "parse a line-delimited JSON corpus into corpus.bin"},
      {"index", "build per-mailbox inverted indexes (indexes.bin)"},
      {"mine", "trim item outliers and mine request/reply instances (instances.jsonl)"},
      {"silver", "synthesize scored training queries per instance (silver.jsonl)"},
      {"train", "build vocabulary and features, train the term ranking model (model.bin)"},
      {"formulate", "write each method's query per instance (queries.jsonl)"},
      {"evaluate", "score all methods; reports, TREC runs and qrels"},
      {"ablate", "retrain with feature groups disabled and report MRR deltas (ablation.json)"},
  };
  return d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proactive attachment recommendation: corpus mining, silver query synthesis,\n"
               "term ranking model training and rank-based evaluation."};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> silver_k;
  std::string stage_to_run;

  for (const std::string& stage : attachrec::known_stages()) {
    CLI::App* sub = app.add_subcommand(stage, stage_descriptions().at(stage));
    sub->add_option("--config", config_path, "JSON run configuration file");
    sub->add_option("--out", out_dir, "artifact directory (overrides work_dir)");
    sub->add_option("--seed", seed, "base seed (overrides the config file)");
    if (stage == "silver") {
      sub->add_option("--k", silver_k, "candidate term budget (overrides the config file)");
    }
    sub->callback([&stage_to_run, stage] { stage_to_run = stage; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  attachrec::RunConfig config = attachrec::default_run_config();
  try {
    if (!config_path.empty()) {
      config = attachrec::load_run_config(config_path);
    }
    if (seed.has_value()) config.seed = *seed;
    if (!out_dir.empty()) config.work_dir = out_dir;
    if (silver_k.has_value()) config.silver_k = *silver_k;
  } catch (const attachrec::ValidationError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }

  return attachrec::run_stage_checked(stage_to_run, config, std::cerr);
}

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "attachrec/neural.hpp"
#include "attachrec/synthetic.hpp"

namespace attachrec {

// One flat configuration with per-stage sections; command-line flags override
// file values. Every random decision flows from the single seed through
// per-stage derived streams.
struct RunConfig {
  std::string work_dir = ".";
  std::uint64_t seed = 1;
  std::string format_version = "1";

  // synth
  SyntheticSpec synth;

  // ingest
  std::string corpus_in;  // line-delimited JSON source; empty = work_dir/corpus.jsonl

  // silver
  std::size_t silver_k = 5;
  std::size_t message_limit = 1000;
  std::size_t item_limit = 100;

  // train
  ModelConfig model;        // vocab_rows is filled in from the built vocabulary
  TrainingConfig training;  // its seed field is ignored; derived from the run seed
  std::size_t vocab_max_terms = 60000;
  double train_fraction = 0.75;       // temporal prefix of instances used for training
  double validation_fraction = 0.05;  // temporal suffix of the training pool
  std::string tagger = "lexicon";     // or "constant"

  // formulate / evaluate
  std::vector<std::string> methods{"model", "full(subject_body)"};
  std::string reference = "full(subject_body)";
  bool heldout_only = true;  // evaluate only the instances after the training pool

  // ablate
  std::vector<std::string> ablation_categories{"M", "C", "PoS", "term", "context", "term_context"};
};

RunConfig default_run_config();

// Applies a JSON document (see README for the schema) on top of the given
// config; unknown keys raise ValidationError.
void apply_config_json(RunConfig& config, const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& config);
std::uint64_t run_config_hash(const RunConfig& config);

const std::vector<std::string>& known_stages();  // execution order

// Runs one stage, reading and writing the fixed artifact names under
// work_dir and finishing with <stage>.manifest.json (config hash plus input
// and output content hashes; no timestamps, so reruns are byte-comparable).
// Throws ValidationError ("<artifact> missing; run <stage> first") when an
// upstream artifact is absent and ExecutionError on runtime failures.
void run_stage(const std::string& stage, const RunConfig& config);

// Exception-to-exit-status wrapper: 0 success, 1 validation error, 2 runtime
// failure; the message lands on err.
int run_stage_checked(const std::string& stage, const RunConfig& config, std::ostream& err);

}  // namespace attachrec

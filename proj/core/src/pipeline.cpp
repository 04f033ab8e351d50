#include "attachrec/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "attachrec/baselines.hpp"
#include "attachrec/binio.hpp"
#include "attachrec/errors.hpp"
#include "attachrec/eval.hpp"
#include "attachrec/retrieval.hpp"
#include "attachrec/silver.hpp"
#include "attachrec/trec.hpp"

namespace attachrec {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config serialization
// ---------------------------------------------------------------------------

std::string kind_name(ModelKind kind) {
  return kind == ModelKind::listwise ? "listwise" : "pointwise";
}

ModelKind parse_kind(const std::string& s) {
  if (s == "listwise") return ModelKind::listwise;
  if (s == "pointwise") return ModelKind::pointwise;
  throw ValidationError("unknown model kind: " + s);
}

bool mask_is_full(const FeatureMask& mask) {
  if (!mask.term || !mask.context) return false;
  for (bool b : mask.aux) {
    if (!b) return false;
  }
  return true;
}

json mask_to_json(const FeatureMask& mask) {
  if (mask_is_full(mask)) return json("full");
  json j;
  j["term"] = mask.term;
  j["context"] = mask.context;
  j["aux"] = json::array();
  for (bool b : mask.aux) j["aux"].push_back(b);
  return j;
}

FeatureMask mask_from_json(const json& j) {
  if (j.is_string()) return FeatureMask::for_category(j.get<std::string>());
  if (!j.is_object()) throw ValidationError("feature_mask must be a category name or an object");
  FeatureMask mask;
  for (const auto& [key, value] : j.items()) {
    if (key == "term") {
      mask.term = value.get<bool>();
    } else if (key == "context") {
      mask.context = value.get<bool>();
    } else if (key == "aux") {
      if (!value.is_array() || value.size() != kAuxFeatureCount) {
        throw ValidationError("feature_mask.aux must list all auxiliary columns");
      }
      for (std::size_t i = 0; i < kAuxFeatureCount; ++i) mask.aux[i] = value[i].get<bool>();
    } else {
      throw ValidationError("unknown feature_mask key: " + key);
    }
  }
  return mask;
}

void apply_synth(SyntheticSpec& spec, const json& section) {
  for (const auto& [key, value] : section.items()) {
    if (key == "users") spec.users = value.get<std::size_t>();
    else if (key == "signal_items") spec.signal_items = value.get<std::size_t>();
    else if (key == "frequent_decoys") spec.frequent_decoys = value.get<std::size_t>();
    else if (key == "rare_decoys") spec.rare_decoys = value.get<std::size_t>();
    else if (key == "vocab_size") spec.vocab_size = value.get<std::size_t>();
    else if (key == "signature_terms_per_item") spec.signature_terms_per_item = value.get<std::size_t>();
    else if (key == "pairs_per_item") spec.pairs_per_item = value.get<std::size_t>();
    else if (key == "violation_pairs") spec.violation_pairs = value.get<std::size_t>();
    else if (key == "chatter_per_frequent_decoy") spec.chatter_per_frequent_decoy = value.get<std::size_t>();
    else if (key == "subject_filler") spec.subject_filler = value.get<std::size_t>();
    else if (key == "body_filler") spec.body_filler = value.get<std::size_t>();
    else if (key == "distractor_items") spec.distractor_items = value.get<std::size_t>();
    else if (key == "digit_token_rate") spec.digit_token_rate = value.get<double>();
    else throw ValidationError("unknown synth config key: " + key);
  }
}

void apply_train(RunConfig& config, const json& section) {
  for (const auto& [key, value] : section.items()) {
    if (key == "model") {
      for (const auto& [mkey, mvalue] : value.items()) {
        if (mkey == "kind") config.model.kind = parse_kind(mvalue.get<std::string>());
        else if (mkey == "context_width") config.model.context_width = mvalue.get<std::size_t>();
        else if (mkey == "embedding_dim") config.model.embedding_dim = mvalue.get<std::size_t>();
        else if (mkey == "hidden") config.model.hidden = mvalue.get<std::size_t>();
        else if (mkey == "dropout_p") config.model.dropout_p = mvalue.get<double>();
        else if (mkey == "feature_mask") config.model.mask = mask_from_json(mvalue);
        else throw ValidationError("unknown model config key: " + mkey);
      }
    } else if (key == "training") {
      for (const auto& [tkey, tvalue] : value.items()) {
        if (tkey == "adam_alpha") config.training.adam_alpha = tvalue.get<double>();
        else if (tkey == "adam_beta1") config.training.adam_beta1 = tvalue.get<double>();
        else if (tkey == "adam_beta2") config.training.adam_beta2 = tvalue.get<double>();
        else if (tkey == "adam_eps") config.training.adam_eps = tvalue.get<double>();
        else if (tkey == "epochs") config.training.epochs = tvalue.get<std::size_t>();
        else if (tkey == "batch_size") config.training.batch_size = tvalue.get<std::size_t>();
        else if (tkey == "reg_lambda") config.training.reg_lambda = tvalue.get<double>();
        else if (tkey == "alpha_eor") config.training.alpha_eor = tvalue.get<double>();
        else throw ValidationError("unknown training config key: " + tkey);
      }
    } else if (key == "vocab_max_terms") {
      config.vocab_max_terms = value.get<std::size_t>();
    } else if (key == "train_fraction") {
      config.train_fraction = value.get<double>();
    } else if (key == "validation_fraction") {
      config.validation_fraction = value.get<double>();
    } else if (key == "tagger") {
      config.tagger = value.get<std::string>();
    } else {
      throw ValidationError("unknown train config key: " + key);
    }
  }
}

// ---------------------------------------------------------------------------
// Artifact bookkeeping
// ---------------------------------------------------------------------------

fs::path artifact(const RunConfig& config, const std::string& name) {
  return fs::path(config.work_dir) / name;
}

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw ValidationError(path.filename().string() + " missing; run " + producer + " first");
  }
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExecutionError("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw ExecutionError("failed while writing " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Manifest keys use bare file names so two runs in different directories stay
// byte-comparable.
void write_manifest(const RunConfig& config, const std::string& stage,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
                    const json& extra) {
  json m;
  m["stage"] = stage;
  m["format_version"] = config.format_version;
  m["config_hash"] = hex64(run_config_hash(config));
  m["inputs"] = json::object();
  for (const fs::path& p : inputs) {
    m["inputs"][p.filename().string()] = hex64(hash_file(p.string()));
  }
  m["outputs"] = json::object();
  for (const fs::path& p : outputs) {
    m["outputs"][p.filename().string()] = hex64(hash_file(p.string()));
  }
  m["extra"] = extra;
  write_text_file(artifact(config, stage + ".manifest.json"), m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Shared stage helpers
// ---------------------------------------------------------------------------

Corpus load_corpus_artifact(const RunConfig& config) {
  const fs::path path = artifact(config, "corpus.bin");
  require_artifact(path, "ingest");
  return load_corpus(path.string());
}

std::vector<MailboxIndex> load_index_artifact(const RunConfig& config) {
  const fs::path path = artifact(config, "indexes.bin");
  require_artifact(path, "index");
  return load_indexes(path.string());
}

std::vector<Instance> load_instance_artifact(const RunConfig& config) {
  const fs::path path = artifact(config, "instances.jsonl");
  require_artifact(path, "mine");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_instances_jsonl(in);
}

std::vector<SilverQuerySet> load_silver_artifact(const RunConfig& config) {
  const fs::path path = artifact(config, "silver.jsonl");
  require_artifact(path, "silver");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<SilverQuerySet> sets;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) sets.push_back(silver_from_json(line));
  }
  return sets;
}

std::unique_ptr<Tagger> make_tagger(const std::string& name) {
  if (name == "lexicon") return std::make_unique<LexiconTagger>();
  if (name == "constant") return std::make_unique<ConstantTagger>();
  throw ValidationError("unknown tagger: " + name);
}

struct Split {
  std::vector<Instance> train;
  std::vector<Instance> validation;
  std::vector<Instance> heldout;
};

// Instances arrive sorted by reply time; the training pool is the temporal
// prefix and its own validation slice is the pool's temporal suffix, so
// nothing trains on data later than what it is validated or tested on.
Split temporal_split(const std::vector<Instance>& instances, double train_fraction,
                     double validation_fraction) {
  if (train_fraction <= 0.0 || train_fraction > 1.0) {
    throw ValidationError("train_fraction must be in (0, 1]");
  }
  if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
    throw ValidationError("validation_fraction must be in [0, 1)");
  }
  const std::size_t n = instances.size();
  std::size_t pool = static_cast<std::size_t>(std::floor(train_fraction * double(n)));
  pool = std::min(pool, n);
  if (pool < 2) {
    throw ValidationError("training pool needs at least 2 instances; have " +
                          std::to_string(pool));
  }
  std::size_t val = static_cast<std::size_t>(std::floor(validation_fraction * double(pool)));
  val = std::max<std::size_t>(val, 1);
  val = std::min(val, pool - 1);

  Split split;
  split.train.assign(instances.begin(), instances.begin() + std::ptrdiff_t(pool - val));
  split.validation.assign(instances.begin() + std::ptrdiff_t(pool - val),
                          instances.begin() + std::ptrdiff_t(pool));
  split.heldout.assign(instances.begin() + std::ptrdiff_t(pool), instances.end());
  return split;
}

std::vector<Instance> evaluation_instances(const RunConfig& config,
                                           const std::vector<Instance>& instances) {
  if (!config.heldout_only) return instances;
  Split split = temporal_split(instances, config.train_fraction, config.validation_fraction);
  if (split.heldout.empty()) {
    throw ValidationError(
        "no held-out instances; lower train_fraction or set heldout_only=false");
  }
  return split.heldout;
}

CollectionStats stats_before(const Corpus& corpus, std::int64_t boundary) {
  CollectionStats stats;
  for (const Message& m : corpus.messages) {
    if (m.timestamp >= boundary) continue;
    ++stats.message_count;
    stats.total_tokens += m.token_count();
    std::map<std::string, std::uint64_t> counts;
    for (const std::string& t : m.subject_tokens) ++counts[t];
    for (const std::string& t : m.body_tokens) ++counts[t];
    for (const auto& [term, tf] : counts) {
      stats.df[term] += 1;
      stats.cf[term] += tf;
    }
  }
  return stats;
}

struct TrainingData {
  Split split;
  Vocabulary vocab;
  std::vector<MessageFeatures> pool;
  std::vector<FeatureRecord> records;
  std::vector<TrainingPair> train_pairs;
  std::vector<TrainingPair> validation_pairs;
  std::size_t skipped_instances = 0;  // no silver queries or unusable features
};

TrainingData build_training_data(const RunConfig& config, const Corpus& corpus,
                                 const std::vector<MailboxIndex>& indexes,
                                 const std::vector<Instance>& instances,
                                 const std::vector<SilverQuerySet>& silver, const Tagger& tagger) {
  TrainingData data;
  data.split = temporal_split(instances, config.train_fraction, config.validation_fraction);

  // The vocabulary sees only messages sent before the first held-out reply,
  // so the model structure cannot depend on evaluation-period content.
  std::int64_t boundary = std::numeric_limits<std::int64_t>::max();
  if (!data.split.heldout.empty()) boundary = data.split.heldout.front().t_prime;
  data.vocab = build_vocabulary(stats_before(corpus, boundary), config.vocab_max_terms);

  std::multimap<std::string, const SilverQuerySet*> by_instance;
  for (const SilverQuerySet& set : silver) {
    by_instance.emplace(set.instance_id, &set);
  }

  SliceCache slices(indexes);
  auto add_instances = [&](const std::vector<Instance>& part, std::vector<TrainingPair>& out) {
    for (const Instance& inst : part) {
      auto [begin, end] = by_instance.equal_range(inst.reply_id);
      bool any_query = false;
      for (auto it = begin; it != end; ++it) any_query |= !it->second->queries.empty();
      if (!any_query) {
        ++data.skipped_instances;
        continue;
      }
      MessageFeatures features;
      try {
        const Message& request = corpus.message(inst.request_id);
        const CollectionStats& stats = slices.stats(inst.replier, inst.t_prime);
        features = compute_message_features(request, stats, data.vocab, tagger);
      } catch (const ValidationError&) {
        ++data.skipped_instances;
        continue;
      }
      const std::size_t features_index = data.pool.size();
      data.pool.push_back(features);
      data.records.push_back(FeatureRecord{inst.reply_id, std::move(features)});
      for (auto it = begin; it != end; ++it) {
        const SilverQuerySet& set = *it->second;
        for (const SilverQuery& q : set.queries) {
          TrainingPair pair;
          pair.features_index = features_index;
          pair.terms = q.terms;
          pair.weight = q.score;
          pair.id = set.instance_id + "#" + set.item_id;
          out.push_back(std::move(pair));
        }
      }
    }
  };
  add_instances(data.split.train, data.train_pairs);
  add_instances(data.split.validation, data.validation_pairs);

  if (data.train_pairs.empty()) throw ValidationError("no training pairs; silver set is empty");
  if (data.validation_pairs.empty()) {
    throw ValidationError("no validation pairs; silver set is empty on the validation slice");
  }
  return data;
}

// Display name -> formulator, with the artifacts a neural method needs kept
// alive alongside the closures that reference them.
struct ResolvedMethods {
  std::vector<std::pair<std::string, Formulator>> methods;
  std::unique_ptr<TermRankingModel> model;
  std::unique_ptr<Vocabulary> vocab;
  std::unique_ptr<Tagger> tagger;
};

ResolvedMethods resolve_methods(const RunConfig& config, const std::vector<std::string>& names) {
  ResolvedMethods resolved;
  for (const std::string& name : names) {
    if (name == "model") {
      if (!resolved.model) {
        const fs::path model_path = artifact(config, "model.bin");
        const fs::path vocab_path = artifact(config, "vocab.txt");
        require_artifact(model_path, "train");
        require_artifact(vocab_path, "train");
        resolved.model = std::make_unique<TermRankingModel>(load_model(model_path.string()));
        resolved.vocab = std::make_unique<Vocabulary>(load_vocabulary(vocab_path.string()));
        resolved.tagger = make_tagger(config.tagger);
        if (resolved.model->vocab_hash != resolved.vocab->content_hash()) {
          throw ValidationError("model.bin was trained against a different vocab.txt; run train first");
        }
      }
      resolved.methods.emplace_back(
          name, make_neural_formulator(*resolved.model, *resolved.vocab, *resolved.tagger));
    } else {
      resolved.methods.emplace_back(name, make_baseline_formulator(parse_config_name(name)));
    }
  }
  return resolved;
}

std::string method_slug(const std::string& name) {
  std::string slug;
  for (char c : name) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
    if (keep) {
      slug.push_back(c);
    } else if (!slug.empty() && slug.back() != '_') {
      slug.push_back('_');
    }
  }
  while (!slug.empty() && slug.back() == '_') slug.pop_back();
  return slug.empty() ? "method" : slug;
}

std::vector<std::string> methods_with_reference(const RunConfig& config) {
  std::vector<std::string> names = config.methods;
  if (std::find(names.begin(), names.end(), config.reference) == names.end()) {
    names.push_back(config.reference);
  }
  return names;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void stage_synth(const RunConfig& config) {
  config.synth.validate();
  const Corpus corpus = generate_synthetic_corpus(config.synth, derive_seed(config.seed, "synth"));
  const fs::path out_path = artifact(config, "corpus.jsonl");
  {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ExecutionError("cannot write " + out_path.string());
    write_corpus_jsonl(corpus, out);
    out.flush();
    if (!out) throw ExecutionError("failed while writing " + out_path.string());
  }
  json extra;
  extra["messages"] = corpus.messages.size();
  extra["items"] = corpus.items.size();
  extra["mailboxes"] = corpus.mailboxes.size();
  write_manifest(config, "synth", {}, {out_path}, extra);
}

void stage_ingest(const RunConfig& config) {
  fs::path in_path;
  if (config.corpus_in.empty()) {
    in_path = artifact(config, "corpus.jsonl");
    require_artifact(in_path, "synth");
  } else {
    in_path = config.corpus_in;
    if (!fs::exists(in_path)) {
      throw ValidationError("corpus input not found: " + in_path.string());
    }
  }
  ParseResult parsed = parse_corpus_file(in_path.string());
  const fs::path out_path = artifact(config, "corpus.bin");
  save_corpus(parsed.corpus, out_path.string());
  json extra;
  extra["messages"] = parsed.corpus.messages.size();
  extra["items"] = parsed.corpus.items.size();
  extra["warnings"] = parsed.warnings;
  write_manifest(config, "ingest", {in_path}, {out_path}, extra);
}

void stage_index(const RunConfig& config) {
  const Corpus corpus = load_corpus_artifact(config);
  std::vector<MailboxIndex> indexes;
  indexes.reserve(corpus.mailboxes.size());
  for (const auto& [user, docs] : corpus.mailboxes) {
    (void)docs;
    indexes.push_back(build_index(corpus, user));
  }
  const fs::path out_path = artifact(config, "indexes.bin");
  save_indexes(indexes, out_path.string());
  json extra;
  extra["mailboxes"] = indexes.size();
  write_manifest(config, "index", {artifact(config, "corpus.bin")}, {out_path}, extra);
}

void stage_mine(const RunConfig& config) {
  const Corpus corpus = load_corpus_artifact(config);
  const std::set<std::string> retained = trim_item_outliers(corpus);
  const MiningResult result = mine_instances(corpus, retained);
  const std::vector<std::string> violations =
      validate_instances(corpus, retained, result.instances);
  if (!violations.empty()) {
    throw ExecutionError("instance validation failed: " + violations.front());
  }

  const fs::path out_path = artifact(config, "instances.jsonl");
  {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ExecutionError("cannot write " + out_path.string());
    write_instances_jsonl(result.instances, out);
    out.flush();
    if (!out) throw ExecutionError("failed while writing " + out_path.string());
  }

  json summary;
  summary["instances"] = result.instances.size();
  summary["retained_items"] = retained.size();
  summary["total_items"] = corpus.items.size();
  summary["no_thread_history"] = result.drops.no_thread_history;
  summary["all_items_filtered"] = result.drops.all_items_filtered;
  summary["item_bearing_messages"] = result.drops.item_bearing_messages;
  const fs::path summary_path = artifact(config, "mine_summary.json");
  write_text_file(summary_path, summary.dump(2) + "\n");

  write_manifest(config, "mine", {artifact(config, "corpus.bin")}, {out_path, summary_path},
                 summary);
}

void stage_silver(const RunConfig& config) {
  const Corpus corpus = load_corpus_artifact(config);
  const std::vector<MailboxIndex> indexes = load_index_artifact(config);
  const std::vector<Instance> instances = load_instance_artifact(config);

  SliceCache slices(indexes);
  std::ostringstream lines;
  json counts = json::array();
  std::size_t sets_with_queries = 0;
  double best_score_sum = 0.0;
  std::uint64_t scored_total = 0;

  for (const Instance& inst : instances) {
    const MailboxIndex& full_index = slices.full(inst.replier);
    const MailboxIndex& sliced = slices.get(inst.replier, inst.t_prime);
    for (const std::string& item : inst.relevant_items) {
      const std::uint64_t seed =
          derive_seed(config.seed, "silver|" + inst.reply_id + "|" + item);
      const SilverQuerySet set =
          synthesize_silver(corpus, full_index, sliced, inst, item, config.silver_k, seed,
                            config.message_limit, config.item_limit);
      lines << silver_to_json(set) << '\n';
      json c;
      c["instance"] = set.instance_id;
      c["item"] = set.item_id;
      c["count"] = set.scored_candidates;
      counts.push_back(std::move(c));
      scored_total += set.scored_candidates;
      if (!set.queries.empty()) {
        ++sets_with_queries;
        double best = 0.0;
        for (const SilverQuery& q : set.queries) best = std::max(best, q.score);
        best_score_sum += best;
      }
    }
  }

  const fs::path out_path = artifact(config, "silver.jsonl");
  write_text_file(out_path, lines.str());

  json summary;
  summary["instances"] = instances.size();
  summary["sets"] = counts.size();
  summary["sets_with_queries"] = sets_with_queries;
  summary["mean_best_score"] =
      sets_with_queries == 0 ? 0.0 : best_score_sum / double(sets_with_queries);
  summary["scored_candidates_total"] = scored_total;
  const fs::path summary_path = artifact(config, "silver_summary.json");
  write_text_file(summary_path, summary.dump(2) + "\n");

  json extra = summary;
  extra["scored_candidates"] = std::move(counts);
  write_manifest(config, "silver",
                 {artifact(config, "corpus.bin"), artifact(config, "indexes.bin"),
                  artifact(config, "instances.jsonl")},
                 {out_path, summary_path}, extra);
}

void stage_train(const RunConfig& config) {
  const Corpus corpus = load_corpus_artifact(config);
  const std::vector<MailboxIndex> indexes = load_index_artifact(config);
  const std::vector<Instance> instances = load_instance_artifact(config);
  const std::vector<SilverQuerySet> silver = load_silver_artifact(config);
  const std::unique_ptr<Tagger> tagger = make_tagger(config.tagger);

  TrainingData data = build_training_data(config, corpus, indexes, instances, silver, *tagger);

  const fs::path vocab_path = artifact(config, "vocab.txt");
  save_vocabulary(data.vocab, vocab_path.string());
  const fs::path features_path = artifact(config, "features.bin");
  save_feature_records(data.records, *tagger, features_path.string());

  ModelConfig mconfig = config.model;
  mconfig.vocab_rows = data.vocab.row_count();
  mconfig.validate();
  TrainingConfig tconfig = config.training;
  tconfig.seed = derive_seed(config.seed, "train");
  tconfig.validate();

  const TermRankingModel model =
      train_model(data.train_pairs, data.validation_pairs, data.pool, mconfig, tconfig, data.vocab);
  const fs::path model_path = artifact(config, "model.bin");
  save_model(model, model_path.string());

  json summary;
  summary["kind"] = kind_name(mconfig.kind);
  summary["instances"] = instances.size();
  summary["train_instances"] = data.split.train.size();
  summary["validation_instances"] = data.split.validation.size();
  summary["heldout_instances"] = data.split.heldout.size();
  summary["skipped_instances"] = data.skipped_instances;
  summary["train_pairs"] = data.train_pairs.size();
  summary["validation_pairs"] = data.validation_pairs.size();
  summary["vocab_terms"] = data.vocab.terms.size();
  summary["seed"] = model.seed;
  summary["chosen_epoch"] = model.chosen_epoch;
  summary["validation_losses"] = model.validation_losses;
  if (mconfig.kind == ModelKind::pointwise) summary["threshold"] = model.threshold;
  const fs::path summary_path = artifact(config, "train_summary.json");
  write_text_file(summary_path, summary.dump(2) + "\n");

  write_manifest(config, "train",
                 {artifact(config, "corpus.bin"), artifact(config, "indexes.bin"),
                  artifact(config, "instances.jsonl"), artifact(config, "silver.jsonl")},
                 {vocab_path, features_path, model_path, summary_path}, summary);
}

bool methods_need_model(const std::vector<std::string>& names) {
  return std::find(names.begin(), names.end(), "model") != names.end();
}

void stage_formulate(const RunConfig& config) {
  const Corpus corpus = load_corpus_artifact(config);
  const std::vector<MailboxIndex> indexes = load_index_artifact(config);
  const std::vector<Instance> all_instances = load_instance_artifact(config);
  const std::vector<Instance> instances = evaluation_instances(config, all_instances);

  const std::vector<std::string> names = methods_with_reference(config);
  ResolvedMethods resolved = resolve_methods(config, names);

  SliceCache slices(indexes);
  EvalConfig econfig;
  econfig.message_limit = config.message_limit;
  econfig.item_limit = config.item_limit;
  econfig.seed = derive_seed(config.seed, "evaluate");

  std::ostringstream lines;
  for (const auto& [name, formulator] : resolved.methods) {
    const MethodReport report =
        evaluate_method(corpus, slices, instances, name, formulator, econfig);
    for (const InstanceResult& row : report.rows) {
      json j;
      j["instance_id"] = row.instance_id;
      j["method"] = name;
      j["query"] = row.query;
      if (!row.error.empty()) j["error"] = row.error;
      lines << j.dump() << '\n';
    }
  }
  const fs::path out_path = artifact(config, "queries.jsonl");
  write_text_file(out_path, lines.str());

  std::vector<fs::path> inputs = {artifact(config, "corpus.bin"), artifact(config, "indexes.bin"),
                                  artifact(config, "instances.jsonl")};
  if (methods_need_model(names)) {
    inputs.push_back(artifact(config, "vocab.txt"));
    inputs.push_back(artifact(config, "model.bin"));
  }
  json extra;
  extra["methods"] = names;
  extra["instances"] = instances.size();
  write_manifest(config, "formulate", inputs, {out_path}, extra);
}

void stage_evaluate(const RunConfig& config) {
  const Corpus corpus = load_corpus_artifact(config);
  const std::vector<MailboxIndex> indexes = load_index_artifact(config);
  const std::vector<Instance> all_instances = load_instance_artifact(config);
  const std::vector<Instance> instances = evaluation_instances(config, all_instances);

  const std::vector<std::string> names = methods_with_reference(config);
  ResolvedMethods resolved = resolve_methods(config, names);

  SliceCache slices(indexes);
  EvalConfig econfig;
  econfig.message_limit = config.message_limit;
  econfig.item_limit = config.item_limit;
  econfig.seed = derive_seed(config.seed, "evaluate");

  std::vector<MethodReport> reports;
  reports.reserve(resolved.methods.size());
  for (const auto& [name, formulator] : resolved.methods) {
    reports.push_back(evaluate_method(corpus, slices, instances, name, formulator, econfig));
  }

  // Per-instance rows for every method.
  std::ostringstream report_lines;
  for (const MethodReport& report : reports) {
    for (const InstanceResult& row : report.rows) {
      json j;
      j["method"] = report.method;
      j["instance_id"] = row.instance_id;
      j["query"] = row.query;
      j["rr"] = row.rr;
      j["ndcg"] = row.ndcg;
      j["p5"] = row.p5;
      j["ranked_items"] = row.ranked_items;
      j["ranked_scores"] = row.ranked_scores;
      if (!row.error.empty()) j["error"] = row.error;
      report_lines << j.dump() << '\n';
    }
  }
  const fs::path report_path = artifact(config, "report.jsonl");
  write_text_file(report_path, report_lines.str());

  // TREC exports: one run file per method plus the shared relevance judgments.
  const fs::path qrels_path = artifact(config, "qrels.trec");
  write_trec_qrels_file(instances, qrels_path.string());
  std::vector<fs::path> outputs = {report_path, qrels_path};
  json method_summaries = json::array();
  const MethodReport* reference_report = nullptr;
  for (const MethodReport& report : reports) {
    if (report.method == config.reference) reference_report = &report;
  }
  for (const MethodReport& report : reports) {
    const std::string slug = method_slug(report.method);
    const fs::path run_path = artifact(config, "run." + slug + ".trec");
    write_trec_run_file(report, slug, run_path.string());
    outputs.push_back(run_path);

    json m;
    m["name"] = report.method;
    m["run_file"] = run_path.filename().string();
    m["mrr"] = report.mrr;
    m["mean_ndcg"] = report.mean_ndcg;
    m["mean_p5"] = report.mean_p5;
    std::size_t errors = 0;
    for (const InstanceResult& row : report.rows) errors += row.error.empty() ? 0 : 1;
    m["errors"] = errors;
    json hist = json::object();
    for (const auto& [len, count] : query_length_histogram(report)) {
      hist[std::to_string(len)] = count;
    }
    m["query_length_histogram"] = std::move(hist);
    method_summaries.push_back(std::move(m));
  }

  json comparisons = json::array();
  if (reference_report != nullptr) {
    for (const MethodReport& report : reports) {
      if (&report == reference_report) continue;
      const MethodComparison cmp = compare_methods(report, *reference_report);
      json c;
      c["method"] = cmp.method;
      c["reference"] = cmp.reference;
      c["rr_t"] = cmp.rr_test.t;
      c["rr_p"] = cmp.rr_test.p;
      c["ndcg_t"] = cmp.ndcg_test.t;
      c["ndcg_p"] = cmp.ndcg_test.p;
      c["p5_t"] = cmp.p5_test.t;
      c["p5_p"] = cmp.p5_test.p;
      c["rr_delta"] = cmp.rr_delta;
      comparisons.push_back(std::move(c));
    }
  }

  json summary;
  summary["instances"] = instances.size();
  summary["methods"] = std::move(method_summaries);
  summary["comparisons"] = std::move(comparisons);
  summary["reference"] = config.reference;
  const fs::path summary_path = artifact(config, "summary.json");
  write_text_file(summary_path, summary.dump(2) + "\n");
  outputs.push_back(summary_path);

  std::vector<fs::path> inputs = {artifact(config, "corpus.bin"), artifact(config, "indexes.bin"),
                                  artifact(config, "instances.jsonl")};
  if (methods_need_model(names)) {
    inputs.push_back(artifact(config, "vocab.txt"));
    inputs.push_back(artifact(config, "model.bin"));
  }
  write_manifest(config, "evaluate", inputs, outputs, summary);
}

void stage_ablate(const RunConfig& config) {
  const Corpus corpus = load_corpus_artifact(config);
  const std::vector<MailboxIndex> indexes = load_index_artifact(config);
  const std::vector<Instance> all_instances = load_instance_artifact(config);
  const std::vector<SilverQuerySet> silver = load_silver_artifact(config);
  const std::unique_ptr<Tagger> tagger = make_tagger(config.tagger);

  TrainingData data = build_training_data(config, corpus, indexes, all_instances, silver, *tagger);
  const std::vector<Instance> instances = evaluation_instances(config, all_instances);

  ModelConfig mconfig = config.model;
  mconfig.vocab_rows = data.vocab.row_count();
  mconfig.validate();
  TrainingConfig tconfig = config.training;
  tconfig.seed = derive_seed(config.seed, "train");
  tconfig.validate();

  SliceCache slices(indexes);
  EvalConfig econfig;
  econfig.message_limit = config.message_limit;
  econfig.item_limit = config.item_limit;
  econfig.seed = derive_seed(config.seed, "evaluate");

  const std::vector<AblationResult> results =
      ablation_run(config.ablation_categories, data.train_pairs, data.validation_pairs, data.pool,
                   mconfig, tconfig, data.vocab, corpus, slices, instances, *tagger, econfig);

  json rows = json::array();
  for (const AblationResult& r : results) {
    json j;
    j["category"] = r.category;
    j["mrr"] = r.mrr;
    j["delta"] = r.delta;
    rows.push_back(std::move(j));
  }
  json out;
  out["instances"] = instances.size();
  out["results"] = std::move(rows);
  const fs::path out_path = artifact(config, "ablation.json");
  write_text_file(out_path, out.dump(2) + "\n");

  write_manifest(config, "ablate",
                 {artifact(config, "corpus.bin"), artifact(config, "indexes.bin"),
                  artifact(config, "instances.jsonl"), artifact(config, "silver.jsonl")},
                 {out_path}, out);
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

RunConfig default_run_config() { return RunConfig{}; }

void apply_config_json(RunConfig& config, const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("config root must be a JSON object");
  try {
    for (const auto& [key, value] : root.items()) {
      if (key == "work_dir") config.work_dir = value.get<std::string>();
      else if (key == "seed") config.seed = value.get<std::uint64_t>();
      else if (key == "format_version") config.format_version = value.get<std::string>();
      else if (key == "synth") apply_synth(config.synth, value);
      else if (key == "ingest") {
        for (const auto& [ikey, ivalue] : value.items()) {
          if (ikey == "corpus_in") config.corpus_in = ivalue.get<std::string>();
          else throw ValidationError("unknown ingest config key: " + ikey);
        }
      } else if (key == "silver") {
        for (const auto& [skey, svalue] : value.items()) {
          if (skey == "k") config.silver_k = svalue.get<std::size_t>();
          else if (skey == "message_limit") config.message_limit = svalue.get<std::size_t>();
          else if (skey == "item_limit") config.item_limit = svalue.get<std::size_t>();
          else throw ValidationError("unknown silver config key: " + skey);
        }
      } else if (key == "train") {
        apply_train(config, value);
      } else if (key == "evaluate") {
        for (const auto& [ekey, evalue] : value.items()) {
          if (ekey == "methods") config.methods = evalue.get<std::vector<std::string>>();
          else if (ekey == "reference") config.reference = evalue.get<std::string>();
          else if (ekey == "heldout_only") config.heldout_only = evalue.get<bool>();
          else throw ValidationError("unknown evaluate config key: " + ekey);
        }
      } else if (key == "ablate") {
        for (const auto& [akey, avalue] : value.items()) {
          if (akey == "categories") {
            config.ablation_categories = avalue.get<std::vector<std::string>>();
          } else {
            throw ValidationError("unknown ablate config key: " + akey);
          }
        }
      } else {
        throw ValidationError("unknown config key: " + key);
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config value has the wrong type: ") + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  RunConfig config = default_run_config();
  apply_config_json(config, read_text_file(path));
  return config;
}

std::string run_config_to_json(const RunConfig& config) {
  json root;
  root["work_dir"] = config.work_dir;
  root["seed"] = config.seed;
  root["format_version"] = config.format_version;
  json synth;
  synth["users"] = config.synth.users;
  synth["signal_items"] = config.synth.signal_items;
  synth["frequent_decoys"] = config.synth.frequent_decoys;
  synth["rare_decoys"] = config.synth.rare_decoys;
  synth["vocab_size"] = config.synth.vocab_size;
  synth["signature_terms_per_item"] = config.synth.signature_terms_per_item;
  synth["pairs_per_item"] = config.synth.pairs_per_item;
  synth["violation_pairs"] = config.synth.violation_pairs;
  synth["chatter_per_frequent_decoy"] = config.synth.chatter_per_frequent_decoy;
  synth["subject_filler"] = config.synth.subject_filler;
  synth["body_filler"] = config.synth.body_filler;
  synth["distractor_items"] = config.synth.distractor_items;
  synth["digit_token_rate"] = config.synth.digit_token_rate;
  root["synth"] = std::move(synth);
  root["ingest"] = json{{"corpus_in", config.corpus_in}};
  root["silver"] = json{{"k", config.silver_k},
                        {"message_limit", config.message_limit},
                        {"item_limit", config.item_limit}};
  json model;
  model["kind"] = kind_name(config.model.kind);
  model["context_width"] = config.model.context_width;
  model["embedding_dim"] = config.model.embedding_dim;
  model["hidden"] = config.model.hidden;
  model["dropout_p"] = config.model.dropout_p;
  model["feature_mask"] = mask_to_json(config.model.mask);
  json training;
  training["adam_alpha"] = config.training.adam_alpha;
  training["adam_beta1"] = config.training.adam_beta1;
  training["adam_beta2"] = config.training.adam_beta2;
  training["adam_eps"] = config.training.adam_eps;
  training["epochs"] = config.training.epochs;
  training["batch_size"] = config.training.batch_size;
  training["reg_lambda"] = config.training.reg_lambda;
  training["alpha_eor"] = config.training.alpha_eor;
  root["train"] = json{{"model", std::move(model)},
                       {"training", std::move(training)},
                       {"vocab_max_terms", config.vocab_max_terms},
                       {"train_fraction", config.train_fraction},
                       {"validation_fraction", config.validation_fraction},
                       {"tagger", config.tagger}};
  root["evaluate"] = json{{"methods", config.methods},
                          {"reference", config.reference},
                          {"heldout_only", config.heldout_only}};
  root["ablate"] = json{{"categories", config.ablation_categories}};
  return root.dump(2) + "\n";
}

std::uint64_t run_config_hash(const RunConfig& config) {
  // Location fields are excluded so the hash identifies the parameters that
  // shape artifact content, not where the artifacts live.
  RunConfig semantic = config;
  semantic.work_dir = ".";
  semantic.corpus_in.clear();
  return fnv1a64(run_config_to_json(semantic));
}

const std::vector<std::string>& known_stages() {
  static const std::vector<std::string> stages = {"synth",  "ingest",    "index",
                                                  "mine",   "silver",    "train",
                                                  "formulate", "evaluate", "ablate"};
  return stages;
}

void run_stage(const std::string& stage, const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.work_dir, ec);
  if (ec) throw ExecutionError("cannot create work_dir: " + config.work_dir);

  if (stage == "synth") stage_synth(config);
  else if (stage == "ingest") stage_ingest(config);
  else if (stage == "index") stage_index(config);
  else if (stage == "mine") stage_mine(config);
  else if (stage == "silver") stage_silver(config);
  else if (stage == "train") stage_train(config);
  else if (stage == "formulate") stage_formulate(config);
  else if (stage == "evaluate") stage_evaluate(config);
  else if (stage == "ablate") stage_ablate(config);
  else throw ValidationError("unknown stage: " + stage);
}

int run_stage_checked(const std::string& stage, const RunConfig& config, std::ostream& err) {
  try {
    run_stage(stage, config);
    return 0;
  } catch (const ValidationError& e) {
    err << stage << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << stage << ": " << e.what() << '\n';
    return 2;
  }
}

}  // namespace attachrec

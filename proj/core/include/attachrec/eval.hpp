#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "attachrec/baselines.hpp"
#include "attachrec/corpus.hpp"
#include "attachrec/features.hpp"
#include "attachrec/neural.hpp"
#include "attachrec/retrieval.hpp"

namespace attachrec {

// ---- Rank metrics -------------------------------------------------------

// 1/rank of the first relevant item; 0 when none is present.
double reciprocal_rank(const std::vector<std::string>& ranking,
                       const std::set<std::string>& relevant);

// Binary gains discounted by 1/log2(rank+1); the ideal ranking places
// min(|relevant|, truncation_limit) relevant items first.
double ndcg(const std::vector<std::string>& ranking, const std::set<std::string>& relevant,
            std::size_t truncation_limit);

// |relevant in the top five| / 5, regardless of how many items were retrieved.
double precision_at_5(const std::vector<std::string>& ranking,
                      const std::set<std::string>& relevant);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
};

// Paired two-tailed Student t-test on a - b. Zero-variance differences give
// p=1 when the mean difference is 0 and p=0 otherwise.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// ---- Per-instance evaluation --------------------------------------------

// Collection statistics equivalent to rebuilding them over exactly the
// messages a mailbox index holds.
CollectionStats stats_from_index(const MailboxIndex& index);

// Shares per-(user, t') sliced indexes and their collection statistics
// across methods so repeated evaluation stays affordable.
class SliceCache {
 public:
  explicit SliceCache(const std::vector<MailboxIndex>& indexes) : indexes_(&indexes) {}
  const MailboxIndex& full(const std::string& user) const;
  const MailboxIndex& get(const std::string& user, std::int64_t t_prime);
  const CollectionStats& stats(const std::string& user, std::int64_t t_prime);

 private:
  const std::vector<MailboxIndex>* indexes_;
  std::map<std::pair<std::string, std::int64_t>, MailboxIndex> slices_;
  std::map<std::pair<std::string, std::int64_t>, CollectionStats> stats_;
};

struct FormulationContext {
  const Corpus& corpus;
  const Instance& instance;
  const Message& request;
  const MailboxIndex& sliced;  // replier's mailbox restricted to before t'
  SliceCache& slices;
  std::uint64_t seed;  // derived per (method, instance)
};

using Formulator = std::function<std::vector<std::string>(const FormulationContext&)>;

Formulator make_baseline_formulator(const BaselineConfig& config);
Formulator make_neural_formulator(const TermRankingModel& model, const Vocabulary& vocab,
                                  const Tagger& tagger);

struct EvalConfig {
  std::size_t message_limit = 1000;
  std::size_t item_limit = 100;
  std::uint64_t seed = 0;
};

struct InstanceResult {
  std::string instance_id;
  std::vector<std::string> query;
  std::vector<std::string> ranked_items;  // retrieved ranking, best first
  std::vector<double> ranked_scores;
  double rr = 0.0;
  double ndcg = 0.0;
  double p5 = 0.0;
  std::string error;  // non-empty when the instance failed and scored 0
};

struct MethodReport {
  std::string method;
  std::vector<InstanceResult> rows;  // in instance order
  double mrr = 0.0;
  double mean_ndcg = 0.0;
  double mean_p5 = 0.0;
};

// Formulates and scores every instance; per-instance validation failures are
// recorded as zero metrics with an annotation instead of aborting.
MethodReport evaluate_method(const Corpus& corpus, SliceCache& slices,
                             const std::vector<Instance>& instances, const std::string& method,
                             const Formulator& formulator, const EvalConfig& config);

struct MethodComparison {
  std::string method;
  std::string reference;
  std::vector<double> rr_delta;  // per instance: method - reference
  TTestResult rr_test, ndcg_test, p5_test;
};

MethodComparison compare_methods(const MethodReport& method, const MethodReport& reference);

std::map<std::size_t, std::size_t> query_length_histogram(const MethodReport& report);

// ---- Feature ablation ---------------------------------------------------

struct AblationResult {
  std::string category;
  double mrr = 0.0;
  double delta = 0.0;  // (mrr - full mrr) / full mrr
};

// Retrains the model once per category with that input group zeroed and
// reports the relative MRR change against the full-feature model.
std::vector<AblationResult> ablation_run(
    const std::vector<std::string>& categories, const std::vector<TrainingPair>& train_pairs,
    const std::vector<TrainingPair>& validation_pairs, const std::vector<MessageFeatures>& pool,
    const ModelConfig& base_config, const TrainingConfig& tconfig, const Vocabulary& vocab,
    const Corpus& corpus, SliceCache& slices, const std::vector<Instance>& instances,
    const Tagger& tagger, const EvalConfig& econfig);

}  // namespace attachrec

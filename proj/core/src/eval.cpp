#include "attachrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "attachrec/binio.hpp"
#include "attachrec/errors.hpp"

namespace attachrec {

double reciprocal_rank(const std::vector<std::string>& ranking,
                       const std::set<std::string>& relevant) {
  if (relevant.empty()) throw ValidationError("empty relevant set");
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (relevant.count(ranking[i])) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

double ndcg(const std::vector<std::string>& ranking, const std::set<std::string>& relevant,
            std::size_t truncation_limit) {
  if (relevant.empty()) throw ValidationError("empty relevant set");
  double dcg = 0.0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (relevant.count(ranking[i])) {
      dcg += 1.0 / std::log2(static_cast<double>(i + 2));
    }
  }
  const std::size_t ideal = std::min(relevant.size(), std::max<std::size_t>(truncation_limit, 1));
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal; ++i) {
    idcg += 1.0 / std::log2(static_cast<double>(i + 2));
  }
  return dcg / idcg;
}

double precision_at_5(const std::vector<std::string>& ranking,
                      const std::set<std::string>& relevant) {
  if (relevant.empty()) throw ValidationError("empty relevant set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranking.size() && i < 5; ++i) {
    if (relevant.count(ranking[i])) ++hits;
  }
  return static_cast<double>(hits) / 5.0;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("paired samples differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw ValidationError("paired test needs at least two observations");

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);

  TTestResult result;
  if (var == 0.0) {
    if (mean == 0.0) {
      result.t = 0.0;
      result.p = 1.0;
    } else {
      result.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                            : -std::numeric_limits<double>::infinity();
      result.p = 0.0;
    }
    return result;
  }
  result.t = mean / std::sqrt(var / static_cast<double>(n));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  result.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(result.t)));
  return result;
}

CollectionStats stats_from_index(const MailboxIndex& index) {
  CollectionStats stats;
  stats.message_count = index.docs.size();
  stats.total_tokens = index.total_tokens;
  for (const auto& [term, postings] : index.postings) {
    stats.df[term] = postings.size();
    std::uint64_t cf = 0;
    for (const Posting& p : postings) cf += p.tf;
    stats.cf[term] = cf;
  }
  return stats;
}

const MailboxIndex& SliceCache::full(const std::string& user) const {
  for (const MailboxIndex& index : *indexes_) {
    if (index.user == user) return index;
  }
  throw ValidationError("no mailbox index for user " + user);
}

const MailboxIndex& SliceCache::get(const std::string& user, std::int64_t t_prime) {
  const auto key = std::make_pair(user, t_prime);
  auto it = slices_.find(key);
  if (it == slices_.end()) {
    it = slices_.emplace(key, slice_before(full(user), t_prime)).first;
  }
  return it->second;
}

const CollectionStats& SliceCache::stats(const std::string& user, std::int64_t t_prime) {
  const auto key = std::make_pair(user, t_prime);
  auto it = stats_.find(key);
  if (it == stats_.end()) {
    it = stats_.emplace(key, stats_from_index(get(user, t_prime))).first;
  }
  return it->second;
}

Formulator make_baseline_formulator(const BaselineConfig& config) {
  return [config](const FormulationContext& ctx) {
    return formulate_query_baseline(config, ctx.request, ctx.sliced, ctx.seed);
  };
}

Formulator make_neural_formulator(const TermRankingModel& model, const Vocabulary& vocab,
                                  const Tagger& tagger) {
  return [&model, &vocab, &tagger](const FormulationContext& ctx) {
    const CollectionStats& stats =
        ctx.slices.stats(ctx.instance.replier, ctx.instance.t_prime);
    const MessageFeatures features =
        compute_message_features(ctx.request, stats, vocab, tagger);
    if (model.config.kind == ModelKind::listwise) {
      return formulate_query_cnn(model, features);
    }
    return formulate_query_pointwise(model, features);
  };
}

MethodReport evaluate_method(const Corpus& corpus, SliceCache& slices,
                             const std::vector<Instance>& instances, const std::string& method,
                             const Formulator& formulator, const EvalConfig& config) {
  MethodReport report;
  report.method = method;
  report.rows.reserve(instances.size());

  for (const Instance& inst : instances) {
    InstanceResult row;
    row.instance_id = inst.reply_id;
    try {
      const Message& request = corpus.message(inst.request_id);
      const MailboxIndex& sliced = slices.get(inst.replier, inst.t_prime);
      const std::uint64_t seed =
          derive_seed(config.seed, method + "|" + inst.reply_id);
      FormulationContext ctx{corpus, inst, request, sliced, slices, seed};
      row.query = formulator(ctx);
      if (!row.query.empty()) {
        const ItemRanking ranking =
            rank_items(sliced, row.query, inst.t_prime, config.message_limit, config.item_limit);
        row.ranked_items.reserve(ranking.items.size());
        row.ranked_scores.reserve(ranking.items.size());
        for (const RankedItem& item : ranking.items) {
          row.ranked_items.push_back(item.item_id);
          row.ranked_scores.push_back(item.score);
        }
        row.rr = reciprocal_rank(row.ranked_items, inst.relevant_items);
        row.ndcg = ndcg(row.ranked_items, inst.relevant_items, ranking.truncation_limit);
        row.p5 = precision_at_5(row.ranked_items, inst.relevant_items);
      }
    } catch (const ValidationError& e) {
      row.query.clear();
      row.ranked_items.clear();
      row.ranked_scores.clear();
      row.rr = row.ndcg = row.p5 = 0.0;
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }

  if (!report.rows.empty()) {
    for (const InstanceResult& row : report.rows) {
      report.mrr += row.rr;
      report.mean_ndcg += row.ndcg;
      report.mean_p5 += row.p5;
    }
    const double n = static_cast<double>(report.rows.size());
    report.mrr /= n;
    report.mean_ndcg /= n;
    report.mean_p5 /= n;
  }
  return report;
}

MethodComparison compare_methods(const MethodReport& method, const MethodReport& reference) {
  if (method.rows.size() != reference.rows.size()) {
    throw ValidationError("method reports cover different instance counts");
  }
  MethodComparison cmp;
  cmp.method = method.method;
  cmp.reference = reference.method;
  std::vector<double> rr_a, rr_b, ndcg_a, ndcg_b, p5_a, p5_b;
  for (std::size_t i = 0; i < method.rows.size(); ++i) {
    if (method.rows[i].instance_id != reference.rows[i].instance_id) {
      throw ValidationError("method reports cover different instances");
    }
    rr_a.push_back(method.rows[i].rr);
    rr_b.push_back(reference.rows[i].rr);
    ndcg_a.push_back(method.rows[i].ndcg);
    ndcg_b.push_back(reference.rows[i].ndcg);
    p5_a.push_back(method.rows[i].p5);
    p5_b.push_back(reference.rows[i].p5);
    cmp.rr_delta.push_back(method.rows[i].rr - reference.rows[i].rr);
  }
  cmp.rr_test = paired_t_test(rr_a, rr_b);
  cmp.ndcg_test = paired_t_test(ndcg_a, ndcg_b);
  cmp.p5_test = paired_t_test(p5_a, p5_b);
  return cmp;
}

std::map<std::size_t, std::size_t> query_length_histogram(const MethodReport& report) {
  std::map<std::size_t, std::size_t> histogram;
  for (const InstanceResult& row : report.rows) ++histogram[row.query.size()];
  return histogram;
}

std::vector<AblationResult> ablation_run(
    const std::vector<std::string>& categories, const std::vector<TrainingPair>& train_pairs,
    const std::vector<TrainingPair>& validation_pairs, const std::vector<MessageFeatures>& pool,
    const ModelConfig& base_config, const TrainingConfig& tconfig, const Vocabulary& vocab,
    const Corpus& corpus, SliceCache& slices, const std::vector<Instance>& instances,
    const Tagger& tagger, const EvalConfig& econfig) {
  auto train_and_score = [&](const FeatureMask& mask, const std::string& label) {
    ModelConfig config = base_config;
    config.mask = mask;
    const TermRankingModel model =
        train_model(train_pairs, validation_pairs, pool, config, tconfig, vocab);
    const MethodReport report = evaluate_method(
        corpus, slices, instances, label, make_neural_formulator(model, vocab, tagger), econfig);
    return report.mrr;
  };

  const double full_mrr = train_and_score(FeatureMask::full(), "full_features");
  if (full_mrr == 0.0) {
    throw ExecutionError("full-feature model has zero MRR; ablation deltas are undefined");
  }

  std::vector<AblationResult> results;
  {
    AblationResult reference;
    reference.category = "full_features";
    reference.mrr = full_mrr;
    reference.delta = 0.0;
    results.push_back(std::move(reference));
  }
  for (const std::string& category : categories) {
    AblationResult r;
    r.category = category;
    r.mrr = train_and_score(FeatureMask::for_category(category), category);
    r.delta = (r.mrr - full_mrr) / full_mrr;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace attachrec

#include "attachrec/silver.hpp"

#include <algorithm>
#include <cstddef>
#include <map>
#include <unordered_set>
#include <utility>

#include <json.hpp>

#include "attachrec/errors.hpp"
#include "attachrec/stopwords.hpp"
#include "attachrec/tokenize.hpp"

namespace attachrec {

namespace {

// Doc ids (within the index) of pre-t_prime messages that carry the item.
std::vector<std::size_t> carrier_docs(const MailboxIndex& index, const std::string& item_id,
                                      std::int64_t t_prime) {
  std::vector<std::size_t> out;
  for (std::size_t d = 0; d < index.docs.size(); ++d) {
    const DocMeta& meta = index.docs[d];
    if (meta.timestamp >= t_prime) continue;
    if (std::find(meta.direct_items.begin(), meta.direct_items.end(), item_id) !=
        meta.direct_items.end()) {
      out.push_back(d);
    }
  }
  return out;
}

std::string pop_min_df(std::set<std::string>& source, const MailboxIndex& index) {
  auto best = source.begin();
  std::size_t best_df = index.df(*best);
  for (auto it = std::next(best); it != source.end(); ++it) {
    const std::size_t d = index.df(*it);
    if (d < best_df) {
      best = it;
      best_df = d;
    }
  }
  std::string term = *best;
  source.erase(best);
  return term;
}

std::set<std::string> term_set(const std::vector<std::string>& terms) {
  return std::set<std::string>(terms.begin(), terms.end());
}

bool is_strict_subset(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.size() >= b.size()) return false;
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

std::set<std::string> recallable_terms(const MailboxIndex& full_index, const Message& request,
                                       const std::string& item_id, std::int64_t t_prime) {
  std::set<std::string> out;
  const std::vector<std::size_t> carriers = carrier_docs(full_index, item_id, t_prime);
  if (carriers.empty()) return out;
  const std::size_t num_docs = full_index.docs.size();

  std::unordered_set<std::string> seen;
  auto consider = [&](const std::string& term) {
    if (!seen.insert(term).second) return;
    const std::size_t df = full_index.df(term);
    // Document-frequency ratio below 1%, strictly.
    if (df * 100 >= num_docs) return;
    const auto pit = full_index.postings.find(term);
    if (pit == full_index.postings.end()) return;
    std::size_t hits = 0;
    for (const std::size_t d : carriers) {
      const auto& list = pit->second;
      const auto lit = std::lower_bound(list.begin(), list.end(), d,
                                        [](const Posting& p, std::size_t doc) { return p.doc < doc; });
      if (lit != list.end() && lit->doc == d) ++hits;
    }
    // At least 30% of the carrier messages.
    if (hits * 10 >= carriers.size() * 3) out.insert(term);
  };
  for (const std::string& t : request.subject_tokens) consider(t);
  for (const std::string& t : request.body_tokens) consider(t);
  return out;
}

bool is_unwanted(const std::string& token, const Message& request) {
  if (is_stopword(token)) return true;
  if (contains_digit(token)) return true;
  if (contains_punct(token)) return true;
  auto matches_name = [&](const std::string& name) {
    for (const std::string& part : tokenize(name)) {
      if (part == token) return true;
    }
    return false;
  };
  if (matches_name(request.sender_name)) return true;
  for (const std::string& name : request.recipient_names) {
    if (matches_name(name)) return true;
  }
  return false;
}

std::vector<std::string> select_candidate_terms(const Message& request,
                                                std::set<std::string> subject_source,
                                                std::set<std::string> recallable_source,
                                                const MailboxIndex& full_index, std::size_t k,
                                                std::mt19937_64& rng) {
  if (k > 20) {
    throw ValidationError("candidate term budget must be at most 20, got " + std::to_string(k));
  }
  std::vector<std::string> out;
  while ((!subject_source.empty() || !recallable_source.empty()) && out.size() < k) {
    const bool pick_subject = (rng() & 1u) == 0;
    std::set<std::string>* source = pick_subject ? &subject_source : &recallable_source;
    if (source->empty()) source = pick_subject ? &recallable_source : &subject_source;
    const std::string term = pop_min_df(*source, full_index);
    subject_source.erase(term);
    recallable_source.erase(term);
    if (!is_unwanted(term, request)) out.push_back(term);
  }
  return out;
}

double score_query(const MailboxIndex& sliced_index, const std::vector<std::string>& query,
                   const std::string& item_id, std::int64_t t_prime, std::size_t message_limit,
                   std::size_t item_limit) {
  try {
    const ItemRanking ranking =
        rank_items(sliced_index, query, t_prime, message_limit, item_limit);
    const std::size_t rank = item_rank(ranking, item_id);
    return rank == 0 ? 0.0 : 1.0 / static_cast<double>(rank);
  } catch (const QueryUnanswerable&) {
    return 0.0;
  }
}

std::vector<SilverQuery> prune_queries(std::vector<SilverQuery> scored) {
  // Group by exact score.
  std::map<double, std::vector<std::size_t>, std::greater<double>> groups;
  for (std::size_t i = 0; i < scored.size(); ++i) groups[scored[i].score].push_back(i);

  std::vector<bool> dropped(scored.size(), false);

  // Step 1: inside an equal-score group, when the union of the group's term
  // sets is itself a member and the strict subsets jointly reconstruct it,
  // keep the union and drop those subsets.
  for (const auto& [score, members] : groups) {
    (void)score;
    if (members.size() < 2) continue;
    std::set<std::string> group_union;
    for (const std::size_t i : members) {
      for (const std::string& t : scored[i].terms) group_union.insert(t);
    }
    bool union_present = false;
    std::vector<std::size_t> strict_subsets;
    std::set<std::string> subset_union;
    for (const std::size_t i : members) {
      const std::set<std::string> s = term_set(scored[i].terms);
      if (s == group_union) {
        union_present = true;
      } else {
        strict_subsets.push_back(i);
        subset_union.insert(s.begin(), s.end());
      }
    }
    if (union_present && !strict_subsets.empty() && subset_union == group_union) {
      for (const std::size_t i : strict_subsets) dropped[i] = true;
    }
  }

  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (!dropped[i]) survivors.push_back(i);
  }

  // Step 2, evaluated simultaneously over the step-1 survivors: a query falls
  // when some survivor is a strict subset of it with an equal or higher score.
  std::vector<std::set<std::string>> sets(scored.size());
  for (const std::size_t i : survivors) sets[i] = term_set(scored[i].terms);
  std::vector<bool> dominated(scored.size(), false);
  for (const std::size_t q : survivors) {
    for (const std::size_t p : survivors) {
      if (p == q) continue;
      if (scored[p].score >= scored[q].score && is_strict_subset(sets[p], sets[q])) {
        dominated[q] = true;
        break;
      }
    }
  }

  std::vector<SilverQuery> out;
  for (const std::size_t i : survivors) {
    if (!dominated[i]) out.push_back(std::move(scored[i]));
  }
  std::sort(out.begin(), out.end(), [](const SilverQuery& a, const SilverQuery& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.terms < b.terms;
  });
  return out;
}

SilverQuerySet synthesize_silver(const Corpus& corpus, const MailboxIndex& full_index,
                                 const MailboxIndex& sliced_index, const Instance& instance,
                                 const std::string& item_id, std::size_t k, std::uint64_t seed,
                                 std::size_t message_limit, std::size_t item_limit) {
  const Message& request = corpus.message(instance.request_id);

  SilverQuerySet result;
  result.instance_id = instance.reply_id;
  result.item_id = item_id;
  result.seed = seed;

  std::set<std::string> subject_source(request.subject_tokens.begin(),
                                       request.subject_tokens.end());
  std::set<std::string> recallable_source =
      recallable_terms(full_index, request, item_id, instance.t_prime);

  std::mt19937_64 rng(seed);
  result.candidate_terms = select_candidate_terms(request, std::move(subject_source),
                                                  std::move(recallable_source), full_index, k, rng);

  const std::size_t n = result.candidate_terms.size();
  if (n == 0) return result;
  if (n > 20) throw ExecutionError("candidate term count exceeds subset budget");

  result.scored_candidates = (std::size_t{1} << n) - 1;
  std::vector<SilverQuery> scored;
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    SilverQuery q;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) q.terms.push_back(result.candidate_terms[i]);
    }
    q.score = score_query(sliced_index, q.terms, item_id, instance.t_prime, message_limit,
                          item_limit);
    if (q.score > 0.0) scored.push_back(std::move(q));
  }
  result.queries = prune_queries(std::move(scored));
  return result;
}

std::string silver_to_json(const SilverQuerySet& set) {
  nlohmann::ordered_json j;
  j["instance_id"] = set.instance_id;
  j["item_id"] = set.item_id;
  j["seed"] = set.seed;
  j["candidate_terms"] = set.candidate_terms;
  j["scored_candidates"] = set.scored_candidates;
  nlohmann::ordered_json queries = nlohmann::ordered_json::array();
  for (const SilverQuery& q : set.queries) {
    nlohmann::ordered_json jq;
    jq["terms"] = q.terms;
    jq["score"] = q.score;
    queries.push_back(std::move(jq));
  }
  j["queries"] = std::move(queries);
  return j.dump();
}

SilverQuerySet silver_from_json(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad silver query record: ") + e.what());
  }
  SilverQuerySet set;
  try {
    set.instance_id = j.at("instance_id").get<std::string>();
    set.item_id = j.at("item_id").get<std::string>();
    set.seed = j.at("seed").get<std::uint64_t>();
    set.candidate_terms = j.at("candidate_terms").get<std::vector<std::string>>();
    set.scored_candidates = j.at("scored_candidates").get<std::size_t>();
    for (const auto& jq : j.at("queries")) {
      SilverQuery q;
      q.terms = jq.at("terms").get<std::vector<std::string>>();
      q.score = jq.at("score").get<double>();
      set.queries.push_back(std::move(q));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad silver query record: ") + e.what());
  }
  return set;
}

}  // namespace attachrec

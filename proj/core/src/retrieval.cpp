#include "attachrec/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include "attachrec/binio.hpp"
#include "attachrec/errors.hpp"

namespace attachrec {

std::uint64_t MailboxIndex::cf(const std::string& term) const {
  auto it = postings.find(term);
  if (it == postings.end()) return 0;
  std::uint64_t sum = 0;
  for (const Posting& p : it->second) sum += p.tf;
  return sum;
}

std::size_t MailboxIndex::df(const std::string& term) const {
  auto it = postings.find(term);
  return it == postings.end() ? 0 : it->second.size();
}

double MailboxIndex::collection_prob(const std::string& term) const {
  return total_tokens == 0 ? 0.0 : double(cf(term)) / double(total_tokens);
}

namespace {

void finalize_index(MailboxIndex& index) {
  index.total_tokens = 0;
  for (const DocMeta& d : index.docs) index.total_tokens += d.length;
  if (index.docs.empty()) throw ValidationError("mailbox index is empty");
  index.mu = double(index.total_tokens) / double(index.docs.size());
  index.thread_docs.clear();
  for (std::uint32_t i = 0; i < index.docs.size(); ++i)
    index.thread_docs[index.docs[i].thread_id].push_back(i);
}

void index_message_tokens(MailboxIndex& index, std::uint32_t doc, const Message& m) {
  std::map<std::string, std::uint32_t> tf;
  for (const auto& t : m.subject_tokens) tf[t]++;
  for (const auto& t : m.body_tokens) tf[t]++;
  for (const auto& [term, count] : tf) index.postings[term].push_back({doc, count});
}

}  // namespace

MailboxIndex build_index(const Corpus& corpus, const std::string& user) {
  auto it = corpus.mailboxes.find(user);
  if (it == corpus.mailboxes.end() || it->second.empty())
    throw ValidationError("cannot index empty mailbox for user: " + user);
  MailboxIndex index;
  index.user = user;
  for (std::size_t pos : it->second) {
    const Message& m = corpus.messages[pos];
    DocMeta meta;
    meta.message_id = m.message_id;
    meta.thread_id = m.thread_id;
    meta.timestamp = m.timestamp;
    meta.length = std::uint32_t(m.token_count());
    for (const auto& ref : m.items) meta.direct_items.push_back(ref.item_id);
    const std::uint32_t doc = std::uint32_t(index.docs.size());
    index.docs.push_back(std::move(meta));
    index_message_tokens(index, doc, m);
  }
  finalize_index(index);
  return index;
}

MailboxIndex slice_before(const MailboxIndex& full, std::int64_t t_prime) {
  MailboxIndex index;
  index.user = full.user;
  std::vector<std::uint32_t> remap(full.docs.size(), UINT32_MAX);
  for (std::uint32_t i = 0; i < full.docs.size(); ++i) {
    if (full.docs[i].timestamp < t_prime) {
      remap[i] = std::uint32_t(index.docs.size());
      index.docs.push_back(full.docs[i]);
    }
  }
  if (index.docs.empty())
    throw ValidationError("mailbox for user " + full.user + " is empty before t_prime");
  for (const auto& [term, plist] : full.postings) {
    std::vector<Posting> kept;
    for (const Posting& p : plist)
      if (remap[p.doc] != UINT32_MAX) kept.push_back({remap[p.doc], p.tf});
    if (!kept.empty()) index.postings.emplace(term, std::move(kept));
  }
  finalize_index(index);
  return index;
}

namespace {

struct PreparedQuery {
  // Distinct answerable terms with query multiplicity and collection prob.
  struct Term {
    const std::vector<Posting>* postings;
    double multiplicity;
    double p_collection;
  };
  std::vector<Term> terms;
  double total_multiplicity = 0;
};

PreparedQuery prepare_query(const MailboxIndex& index, const std::vector<std::string>& query) {
  std::map<std::string, std::uint32_t> counts;
  for (const auto& t : query) counts[t]++;
  PreparedQuery prepared;
  for (const auto& [term, count] : counts) {
    auto it = index.postings.find(term);
    if (it == index.postings.end()) continue;  // zero collection frequency: dropped
    std::uint64_t cf = 0;
    for (const Posting& p : it->second) cf += p.tf;
    PreparedQuery::Term qt;
    qt.postings = &it->second;
    qt.multiplicity = double(count);
    qt.p_collection = double(cf) / double(index.total_tokens);
    prepared.terms.push_back(qt);
    prepared.total_multiplicity += qt.multiplicity;
  }
  if (prepared.terms.empty())
    throw QueryUnanswerable("no query term occurs in the mailbox of user " + index.user);
  return prepared;
}

std::vector<double> score_all_docs(const MailboxIndex& index, const PreparedQuery& q) {
  const std::size_t n = index.docs.size();
  std::vector<double> scores(n, 0.0);
  // Background part: every doc pays sum_t mult * (log(mu*p_t) - log(len + mu));
  // docs containing a term swap log(mu*p_t) for log(tf + mu*p_t).
  double background = 0.0;
  for (const auto& t : q.terms) background += t.multiplicity * std::log(index.mu * t.p_collection);
  for (std::size_t d = 0; d < n; ++d)
    scores[d] = background - q.total_multiplicity * std::log(double(index.docs[d].length) + index.mu);
  for (const auto& t : q.terms) {
    const double base = std::log(index.mu * t.p_collection);
    for (const Posting& p : *t.postings)
      scores[p.doc] += t.multiplicity * (std::log(double(p.tf) + index.mu * t.p_collection) - base);
  }
  return scores;
}

}  // namespace

double qlm_log_score(const MailboxIndex& index, const std::vector<std::string>& query, std::uint32_t doc) {
  if (doc >= index.docs.size()) throw ValidationError("doc out of range");
  PreparedQuery q = prepare_query(index, query);
  double score = 0.0;
  for (const auto& t : q.terms) {
    std::uint32_t tf = 0;
    auto it = std::lower_bound(t.postings->begin(), t.postings->end(), doc,
                               [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    if (it != t.postings->end() && it->doc == doc) tf = it->tf;
    score += t.multiplicity * std::log((double(tf) + index.mu * t.p_collection) /
                                       (double(index.docs[doc].length) + index.mu));
  }
  return score;
}

std::vector<ScoredMessage> search(const MailboxIndex& index, const std::vector<std::string>& query,
                                  std::int64_t t_prime, std::size_t limit) {
  PreparedQuery q = prepare_query(index, query);
  std::vector<double> scores = score_all_docs(index, q);
  std::vector<std::uint32_t> eligible;
  for (std::uint32_t d = 0; d < index.docs.size(); ++d)
    if (index.docs[d].timestamp < t_prime) eligible.push_back(d);
  std::sort(eligible.begin(), eligible.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return index.docs[a].message_id < index.docs[b].message_id;
  });
  if (eligible.size() > limit) eligible.resize(limit);
  std::vector<ScoredMessage> out;
  out.reserve(eligible.size());
  const double best = eligible.empty() ? 0.0 : scores[eligible.front()];
  for (std::uint32_t d : eligible) {
    ScoredMessage sm;
    sm.message_id = index.docs[d].message_id;
    sm.doc = d;
    sm.log_score = scores[d];
    sm.prob = std::exp(scores[d] - best);
    out.push_back(std::move(sm));
  }
  return out;
}

ItemRanking rank_items(const MailboxIndex& index, const std::vector<std::string>& query,
                       std::int64_t t_prime, std::size_t message_limit, std::size_t item_limit) {
  std::vector<ScoredMessage> retrieved = search(index, query, t_prime, message_limit);

  // Per thread: items carried before t_prime and the count of pre-t_prime docs.
  std::map<std::string, std::set<std::string>> thread_items;
  std::map<std::string, double> z1;
  for (const auto& [thread, docs] : index.thread_docs) {
    std::set<std::string> items;
    std::size_t pre_count = 0;
    for (std::uint32_t d : docs) {
      if (index.docs[d].timestamp >= t_prime) continue;
      ++pre_count;
      for (const auto& item : index.docs[d].direct_items) items.insert(item);
    }
    if (items.empty() || pre_count == 0) continue;
    for (const auto& item : items) z1[item] += double(pre_count);
    thread_items.emplace(thread, std::move(items));
  }

  std::map<std::string, double> contribution;
  for (const ScoredMessage& sm : retrieved) {
    auto it = thread_items.find(index.docs[sm.doc].thread_id);
    if (it == thread_items.end()) continue;
    for (const auto& item : it->second) contribution[item] += sm.prob;
  }

  ItemRanking ranking;
  ranking.truncation_limit = item_limit;
  for (const auto& [item, acc] : contribution)
    ranking.items.push_back({item, acc / z1.at(item)});
  std::sort(ranking.items.begin(), ranking.items.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item_id < b.item_id;
  });
  if (ranking.items.size() > item_limit) ranking.items.resize(item_limit);
  return ranking;
}

std::size_t item_rank(const ItemRanking& ranking, const std::string& item_id) {
  for (std::size_t i = 0; i < ranking.items.size(); ++i)
    if (ranking.items[i].item_id == item_id) return i + 1;
  return 0;
}

namespace {

constexpr char kIndexMagic[5] = "ARIX";
constexpr std::uint32_t kIndexVersion = 1;

}  // namespace

void save_indexes(const std::vector<MailboxIndex>& indexes, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExecutionError("cannot write index container: " + path);
  BinaryWriter w(out);
  w.magic(kIndexMagic, kIndexVersion);
  w.u64(indexes.size());
  for (const MailboxIndex& index : indexes) {
    w.str(index.user);
    w.u64(index.docs.size());
    for (const DocMeta& d : index.docs) {
      w.str(d.message_id);
      w.str(d.thread_id);
      w.i64(d.timestamp);
      w.u32(d.length);
      w.str_vec(d.direct_items);
    }
    w.u64(index.postings.size());
    for (const auto& [term, plist] : index.postings) {
      w.str(term);
      w.u64(plist.size());
      for (const Posting& p : plist) {
        w.u32(p.doc);
        w.u32(p.tf);
      }
    }
  }
}

std::vector<MailboxIndex> load_indexes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open index container: " + path);
  BinaryReader r(in);
  r.magic(kIndexMagic, kIndexVersion);
  std::vector<MailboxIndex> indexes;
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    MailboxIndex index;
    index.user = r.str();
    const std::uint64_t nd = r.u64();
    for (std::uint64_t d = 0; d < nd; ++d) {
      DocMeta meta;
      meta.message_id = r.str();
      meta.thread_id = r.str();
      meta.timestamp = r.i64();
      meta.length = r.u32();
      meta.direct_items = r.str_vec();
      index.docs.push_back(std::move(meta));
    }
    const std::uint64_t nt = r.u64();
    for (std::uint64_t t = 0; t < nt; ++t) {
      std::string term = r.str();
      const std::uint64_t np = r.u64();
      std::vector<Posting> plist;
      plist.reserve(std::size_t(np));
      for (std::uint64_t p = 0; p < np; ++p) {
        Posting post;
        post.doc = r.u32();
        post.tf = r.u32();
        plist.push_back(post);
      }
      index.postings.emplace(std::move(term), std::move(plist));
    }
    finalize_index(index);
    indexes.push_back(std::move(index));
  }
  return indexes;
}

}  // namespace attachrec

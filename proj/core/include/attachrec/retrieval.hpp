#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "attachrec/corpus.hpp"

namespace attachrec {

struct DocMeta {
  std::string message_id;
  std::string thread_id;
  std::int64_t timestamp = 0;
  std::uint32_t length = 0;  // subject + body token count
  std::vector<std::string> direct_items;  // items carried by this message
};

struct Posting {
  std::uint32_t doc = 0;  // index into MailboxIndex::docs
  std::uint32_t tf = 0;
};

// One user's mailbox, indexed as a unit. Docs are ordered by
// (timestamp, message_id); postings are ordered by doc.
struct MailboxIndex {
  std::string user;
  std::vector<DocMeta> docs;
  std::map<std::string, std::vector<Posting>> postings;
  std::map<std::string, std::vector<std::uint32_t>> thread_docs;
  std::uint64_t total_tokens = 0;
  double mu = 0.0;  // Dirichlet prior: average indexed message length

  std::size_t size() const { return docs.size(); }
  std::uint64_t cf(const std::string& term) const;
  std::size_t df(const std::string& term) const;
  double collection_prob(const std::string& term) const;  // cf / total
};

// Throws ValidationError when the user has no messages.
MailboxIndex build_index(const Corpus& corpus, const std::string& user);

// The same mailbox restricted to messages with timestamp < t_prime, with all
// statistics (mu, collection frequencies) recomputed over the restriction, so
// nothing at or after t_prime can influence retrieval. Throws when empty.
MailboxIndex slice_before(const MailboxIndex& index, std::int64_t t_prime);

// Sum over query token occurrences of log((tf + mu*p(t|C)) / (len + mu)).
// Tokens with zero collection frequency are dropped first; QueryUnanswerable
// if none survive.
double qlm_log_score(const MailboxIndex& index, const std::vector<std::string>& query, std::uint32_t doc);

struct ScoredMessage {
  std::string message_id;
  std::uint32_t doc = 0;
  double log_score = 0.0;
  double prob = 0.0;  // exp(log_score - best log_score) within the result list
};

// Messages with timestamp < t_prime ranked by descending log score, ties by
// message_id, truncated to limit.
std::vector<ScoredMessage> search(const MailboxIndex& index, const std::vector<std::string>& query,
                                  std::int64_t t_prime, std::size_t limit = 1000);

struct RankedItem {
  std::string item_id;
  double score = 0.0;
};

struct ItemRanking {
  std::vector<RankedItem> items;  // descending score, ties by item_id
  std::size_t truncation_limit = 100;
};

// Items scored by sum of retrieved-message probabilities whose thread carried
// the item before t_prime, normalized by the count of pre-t_prime mailbox
// messages in such threads. Items without a pre-t_prime association never
// appear.
ItemRanking rank_items(const MailboxIndex& index, const std::vector<std::string>& query,
                       std::int64_t t_prime, std::size_t message_limit = 1000,
                       std::size_t item_limit = 100);

// 1-based rank of item_id, or 0 when absent.
std::size_t item_rank(const ItemRanking& ranking, const std::string& item_id);

void save_indexes(const std::vector<MailboxIndex>& indexes, const std::string& path);
std::vector<MailboxIndex> load_indexes(const std::string& path);

}  // namespace attachrec

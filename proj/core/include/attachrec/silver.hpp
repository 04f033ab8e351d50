#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "attachrec/corpus.hpp"
#include "attachrec/retrieval.hpp"

namespace attachrec {

// Terms that occur in at least 30% of the pre-t_prime mailbox messages that
// carried the item directly, have a document frequency ratio below 1% over
// the whole mailbox, and occur at least once in the request message.
std::set<std::string> recallable_terms(const MailboxIndex& full_index, const Message& request,
                                       const std::string& item_id, std::int64_t t_prime);

// Stopword, contains a digit, contains punctuation, or equals a sender or
// recipient display-name token of the request (case-insensitively).
bool is_unwanted(const std::string& token, const Message& request);

// Candidate selection: repeatedly pick one of the two term sources uniformly
// at random, pop its lowest-df term (ties lexicographic), and keep it unless
// unwanted, until k terms are kept or both sources are exhausted. A popped
// term leaves both sources.
std::vector<std::string> select_candidate_terms(const Message& request,
                                                std::set<std::string> subject_source,
                                                std::set<std::string> recallable_source,
                                                const MailboxIndex& full_index, std::size_t k,
                                                std::mt19937_64& rng);

// Reciprocal rank of the item under the query in the pre-t_prime mailbox;
// 0 when the item is not retrieved or the query is unanswerable.
double score_query(const MailboxIndex& sliced_index, const std::vector<std::string>& query,
                   const std::string& item_id, std::int64_t t_prime,
                   std::size_t message_limit = 1000, std::size_t item_limit = 100);

struct SilverQuery {
  std::vector<std::string> terms;  // candidate order
  double score = 0.0;              // reciprocal rank, in (0, 1]
};

struct SilverQuerySet {
  std::string instance_id;  // reply message id
  std::string item_id;
  std::uint64_t seed = 0;
  std::vector<std::string> candidate_terms;
  std::size_t scored_candidates = 0;  // 2^|T| - 1
  std::vector<SilverQuery> queries;   // retained after pruning
};

// Scores every non-empty subset of the candidate terms, drops zero scores,
// and prunes: within each equal-score group whose members' union U is itself
// in the group and is jointly reconstructed by its strict subsets, the strict
// subsets are dropped; then any query that is a strict superset of a retained
// query with an equal or higher score is dropped.
std::vector<SilverQuery> prune_queries(std::vector<SilverQuery> scored);

SilverQuerySet synthesize_silver(const Corpus& corpus, const MailboxIndex& full_index,
                                 const MailboxIndex& sliced_index, const Instance& instance,
                                 const std::string& item_id, std::size_t k, std::uint64_t seed,
                                 std::size_t message_limit = 1000, std::size_t item_limit = 100);

std::string silver_to_json(const SilverQuerySet& set);
SilverQuerySet silver_from_json(const std::string& line);

}  // namespace attachrec

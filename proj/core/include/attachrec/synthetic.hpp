#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attachrec/corpus.hpp"

namespace attachrec {

// Planted-signal corpus: every "signal" item is announced once to every user
// (making it available in all mailboxes) and then requested in dedicated
// threads whose request subject carries the item's signature terms; the reply
// attaches the item. Request bodies cross-reference other items' signatures
// as distractors, so a query of the whole request text ties several items
// while the signature subset retrieves the right one at rank 1. Decoy items
// with outlier frequencies exercise the trimming step, violation pairs and
// the announcements themselves exercise the instance-mining drop rules.
struct SyntheticSpec {
  std::size_t users = 8;
  std::size_t signal_items = 36;
  std::size_t frequent_decoys = 2;  // trimmed as too frequent
  std::size_t rare_decoys = 2;      // trimmed as too rare
  std::size_t vocab_size = 500;
  std::size_t signature_terms_per_item = 2;
  std::size_t pairs_per_item = 2;     // request/reply threads per signal item
  std::size_t violation_pairs = 3;    // request already carries the item
  std::size_t chatter_per_frequent_decoy = 6;
  std::size_t subject_filler = 2;     // filler terms beside the signature
  std::size_t body_filler = 8;
  std::size_t distractor_items = 2;   // other items echoed in a request body
  double digit_token_rate = 0.15;     // chance of a numeric token per request

  void validate() const;
};

// Deterministic per (spec, seed); same inputs give byte-identical corpora.
Corpus generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed);

// The deterministic word list the generator draws from; exposed for tests.
std::vector<std::string> synthetic_vocabulary(std::size_t size);

// Signature terms of one signal item under the given spec.
std::vector<std::string> signature_terms(const SyntheticSpec& spec, std::size_t item_index);

// Item id of one signal item under the given spec.
std::string signal_item_id(const SyntheticSpec& spec, std::size_t item_index);

}  // namespace attachrec

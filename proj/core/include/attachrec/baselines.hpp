#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "attachrec/corpus.hpp"
#include "attachrec/retrieval.hpp"

namespace attachrec {

enum class BaselineMethod : std::uint8_t {
  full,              // every unique term of the field
  tf,                // top-k by term frequency in the field
  tfidf,             // top-k by tf * ln(N / df)
  logtfidf,          // top-k by ln(1 + tf) * ln(N / df)
  relative_entropy,  // top-k by p_l * ln(p_l / p_C), p_l mixing field and collection
  random_k,          // uniform k-subset of the unique field terms
  random_pct,        // uniform subset holding ceil(p% of n) terms
};

enum class QueryField : std::uint8_t { subject, body, subject_body };

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::full;
  QueryField field = QueryField::subject_body;
  std::size_t k = 0;     // term budget; used by tf/tfidf/logtfidf/relative_entropy/random_k
  unsigned percent = 0;  // used by random_pct
  double lambda = 0.0;   // field weight of the mixture; used by relative_entropy
};

std::string method_name(BaselineMethod method);
std::string field_name(QueryField field);

// Display name, e.g. "tfidf(subject, k=5)" or "re(body, k=3, lambda=0.4)".
std::string config_name(const BaselineConfig& config);

// Inverse of config_name; throws ValidationError on anything it cannot parse.
BaselineConfig parse_config_name(const std::string& name);

std::vector<std::string> field_tokens(const Message& message, QueryField field);

// Unbiased draw from [0, n) by rejection.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);

// Builds the query for one request. Collection-side formulas (tfidf, logtfidf,
// relative_entropy) skip terms absent from the index, where they are undefined
// and could never match. Random methods consume the seed; others ignore it.
std::vector<std::string> formulate_query_baseline(const BaselineConfig& config,
                                                  const Message& request,
                                                  const MailboxIndex& index, std::uint64_t seed);

// Full sweep: full x 3 fields; tf/tfidf/logtfidf/random_k x 3 fields x k in 1..15;
// relative_entropy additionally x lambda in 0.1..0.9; random_pct x 3 fields
// x p in {10,20,30,40,50}.
std::vector<BaselineConfig> baseline_grid();

}  // namespace attachrec

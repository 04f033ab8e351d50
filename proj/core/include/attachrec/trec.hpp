#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "attachrec/corpus.hpp"
#include "attachrec/eval.hpp"

namespace attachrec {

// TREC tools treat whitespace as a field separator; identifiers are made safe
// the same way on both the run and qrels side.
std::string trec_token(const std::string& id);

// Run rows: "qid Q0 docno rank score tag". Scores are nudged strictly
// descending (next representable double downward) so any reader that re-sorts
// by score reproduces exactly this ranking.
void write_trec_run(const MethodReport& report, const std::string& tag, std::ostream& out);

// Qrels rows: "qid 0 docno 1" for every relevant item of every instance.
void write_trec_qrels(const std::vector<Instance>& instances, std::ostream& out);

void write_trec_run_file(const MethodReport& report, const std::string& tag,
                         const std::string& path);
void write_trec_qrels_file(const std::vector<Instance>& instances, const std::string& path);

}  // namespace attachrec

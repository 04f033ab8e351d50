#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <sstream>

#include "attachrec/errors.hpp"
#include "attachrec/retrieval.hpp"
#include "attachrec/silver.hpp"
#include "attachrec/synthetic.hpp"
#include "attachrec/tokenize.hpp"

using namespace attachrec;

TEST_CASE("spec validation rejects degenerate layouts") {
  SyntheticSpec spec;
  CHECK_NOTHROW(spec.validate());

  SyntheticSpec bad = spec;
  bad.users = 1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = spec;
  bad.signature_terms_per_item = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = spec;
  bad.vocab_size = 10;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = spec;
  bad.distractor_items = bad.signal_items;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = spec;
  bad.violation_pairs = bad.signal_items + 1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = spec;
  bad.digit_token_rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("the default layout produces exactly the documented corpus shape") {
  SyntheticSpec spec;
  Corpus corpus = generate_synthetic_corpus(spec, 1);

  // 36 announcements + 144 request/reply messages + 6 violation messages
  // + 12 decoy chatter + 2 rare decoy messages.
  CHECK(corpus.messages.size() == 200);
  CHECK(corpus.items.size() == 40);  // 36 signal + 2 frequent + 2 rare decoys

  // Every message parses into the same mailbox universe.
  for (const Message& m : corpus.messages) {
    CHECK_FALSE(m.message_id.empty());
    CHECK_FALSE(m.sender.empty());
    CHECK_FALSE(m.recipients.empty());
  }
}

TEST_CASE("generation is byte-identical per seed and differs across seeds") {
  SyntheticSpec spec;
  Corpus a = generate_synthetic_corpus(spec, 7);
  Corpus b = generate_synthetic_corpus(spec, 7);
  std::ostringstream sa, sb;
  write_corpus_jsonl(a, sa);
  write_corpus_jsonl(b, sb);
  CHECK(sa.str() == sb.str());

  Corpus c = generate_synthetic_corpus(spec, 8);
  std::ostringstream sc;
  write_corpus_jsonl(c, sc);
  CHECK(sa.str() != sc.str());
}

TEST_CASE("trimming removes exactly the planted frequency outliers") {
  SyntheticSpec spec;
  Corpus corpus = generate_synthetic_corpus(spec, 1);
  std::set<std::string> retained = trim_item_outliers(corpus);
  CHECK(retained.size() == 36);
  for (std::size_t i = 0; i < spec.signal_items; ++i) {
    CHECK(retained.count(signal_item_id(spec, i)) == 1);
  }
  // Nothing else survives: retained is exactly the signal set.
  std::set<std::string> expected;
  for (std::size_t i = 0; i < spec.signal_items; ++i) expected.insert(signal_item_id(spec, i));
  CHECK(retained == expected);
}

TEST_CASE("mining recovers every request/reply pair and drops the planted traps") {
  SyntheticSpec spec;
  Corpus corpus = generate_synthetic_corpus(spec, 1);
  std::set<std::string> retained = trim_item_outliers(corpus);
  MiningResult mined = mine_instances(corpus, retained);

  CHECK(mined.instances.size() == 72);  // 36 items x 2 request threads
  // Announcements (36) and violation requests (3) start their threads.
  CHECK(mined.drops.no_thread_history == 39);
  // Violation replies repeat an item their own request already carried.
  CHECK(mined.drops.all_items_filtered == 3);
  CHECK(mined.drops.item_bearing_messages == 114);
  CHECK(mined.drops.item_bearing_messages ==
        mined.instances.size() + mined.drops.no_thread_history +
            mined.drops.all_items_filtered);

  CHECK(validate_instances(corpus, retained, mined.instances).empty());

  for (const Instance& inst : mined.instances) {
    CHECK(inst.relevant_items.size() == 1);
    CHECK(retained.count(*inst.relevant_items.begin()) == 1);
  }
}

TEST_CASE("an item's signature terms retrieve it at rank one") {
  SyntheticSpec spec;
  Corpus corpus = generate_synthetic_corpus(spec, 1);
  std::set<std::string> retained = trim_item_outliers(corpus);
  MiningResult mined = mine_instances(corpus, retained);

  std::map<std::string, std::size_t> item_index;
  for (std::size_t i = 0; i < spec.signal_items; ++i) item_index[signal_item_id(spec, i)] = i;

  REQUIRE(mined.instances.size() >= 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const Instance& inst = mined.instances[i];
    const std::string item = *inst.relevant_items.begin();
    REQUIRE(item_index.count(item) == 1);
    std::vector<std::string> signature = signature_terms(spec, item_index[item]);

    MailboxIndex full = build_index(corpus, inst.replier);
    MailboxIndex sliced = slice_before(full, inst.t_prime);
    CHECK(score_query(sliced, signature, item, inst.t_prime) == doctest::Approx(1.0));
  }
}

TEST_CASE("requests echo distractor signatures so the full text is ambiguous") {
  SyntheticSpec spec;
  Corpus corpus = generate_synthetic_corpus(spec, 1);
  std::set<std::string> retained = trim_item_outliers(corpus);
  MiningResult mined = mine_instances(corpus, retained);

  std::map<std::string, std::size_t> item_index;
  for (std::size_t i = 0; i < spec.signal_items; ++i) item_index[signal_item_id(spec, i)] = i;

  // The request body must contain at least one other item's signature term.
  const Instance& inst = mined.instances[0];
  const Message& request = corpus.message(inst.request_id);
  const std::size_t own = item_index[*inst.relevant_items.begin()];
  std::set<std::string> body(request.body_tokens.begin(), request.body_tokens.end());
  bool found_foreign = false;
  for (std::size_t i = 0; i < spec.signal_items && !found_foreign; ++i) {
    if (i == own) continue;
    for (const std::string& t : signature_terms(spec, i)) {
      if (body.count(t)) {
        found_foreign = true;
        break;
      }
    }
  }
  CHECK(found_foreign);

  // And its subject carries the item's own signature.
  std::set<std::string> subject(request.subject_tokens.begin(), request.subject_tokens.end());
  for (const std::string& t : signature_terms(spec, own)) CHECK(subject.count(t) == 1);
}

TEST_CASE("word list, signatures, and item ids are deterministic and distinct") {
  std::vector<std::string> words = synthetic_vocabulary(50);
  CHECK(words.size() == 50);
  CHECK(words == synthetic_vocabulary(50));
  std::set<std::string> unique_words(words.begin(), words.end());
  CHECK(unique_words.size() == 50);
  for (const std::string& w : words) {
    // Tokenizer-stable: each word survives tokenization unchanged.
    CHECK(tokenize(w) == std::vector<std::string>{w});
  }
  CHECK_THROWS_AS(synthetic_vocabulary(500000), ValidationError);

  SyntheticSpec spec;
  CHECK(signature_terms(spec, 0).size() == spec.signature_terms_per_item);
  CHECK(signature_terms(spec, 0) == signature_terms(spec, 0));
  CHECK(signature_terms(spec, 0) != signature_terms(spec, 1));

  std::set<std::string> ids;
  for (std::size_t i = 0; i < spec.signal_items; ++i) ids.insert(signal_item_id(spec, i));
  CHECK(ids.size() == spec.signal_items);
  CHECK(signal_item_id(spec, 3) == signal_item_id(spec, 3));
}

TEST_CASE("a layout without outlier decoys keeps every item") {
  SyntheticSpec spec;
  spec.users = 4;
  spec.signal_items = 8;
  spec.frequent_decoys = 0;
  spec.rare_decoys = 0;
  spec.violation_pairs = 2;
  spec.vocab_size = 120;
  spec.distractor_items = 2;
  Corpus corpus = generate_synthetic_corpus(spec, 3);
  CHECK(corpus.items.size() == 8);
  // Eight items put the 5% cut at zero entries, so everything survives.
  std::set<std::string> retained = trim_item_outliers(corpus);
  CHECK(retained.size() == 8);
  MiningResult mined = mine_instances(corpus, retained);
  CHECK(mined.instances.size() == 16);             // 8 items x 2 request threads
  CHECK(mined.drops.no_thread_history == 10);      // 8 announcements + 2 violation requests
  CHECK(mined.drops.all_items_filtered == 2);      // 2 violation replies
  CHECK(mined.drops.item_bearing_messages == 28);
  CHECK(validate_instances(corpus, retained, mined.instances).empty());
}

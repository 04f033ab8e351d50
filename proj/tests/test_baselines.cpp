#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "attachrec/baselines.hpp"
#include "attachrec/errors.hpp"
#include "test_support.hpp"

using namespace attachrec;
using testsupport::make_corpus;
using testsupport::make_message;

namespace {

// Ten two-token mailbox messages: df(a)=5, df(b)=1, df(c)=4, total 20 tokens,
// so cf(a)=5, cf(b)=1 and p_C(a)=0.25, p_C(b)=0.05.
MailboxIndex fixture_index() {
  std::vector<Message> messages;
  for (int i = 0; i < 10; ++i) {
    std::string lead = i < 5 ? "a" : (i == 5 ? "b" : "c");
    messages.push_back(make_message("m" + std::to_string(i), "t" + std::to_string(i), 100 + i,
                                    "v@x", {"u@x"}, lead + " w" + std::to_string(i), ""));
  }
  Corpus corpus = make_corpus(std::move(messages));
  return build_index(corpus, "u@x");  // the index owns its statistics
}

BaselineConfig cfg(BaselineMethod m, QueryField f, std::size_t k = 0, unsigned pct = 0,
                   double lambda = 0.0) {
  BaselineConfig c;
  c.method = m;
  c.field = f;
  c.k = k;
  c.percent = pct;
  c.lambda = lambda;
  return c;
}

}  // namespace

TEST_CASE("field_tokens selects subject, body, or their concatenation") {
  Message m = make_message("m", "t", 1, "v@x", {"u@x"}, "alpha beta", "gamma delta");
  CHECK(field_tokens(m, QueryField::subject) == std::vector<std::string>{"alpha", "beta"});
  CHECK(field_tokens(m, QueryField::body) == std::vector<std::string>{"gamma", "delta"});
  CHECK(field_tokens(m, QueryField::subject_body) ==
        std::vector<std::string>{"alpha", "beta", "gamma", "delta"});
}

TEST_CASE("full emits unique field terms in lexicographic order") {
  MailboxIndex index = fixture_index();
  Message req = make_message("r", "tr", 999, "w@x", {"u@x"}, "beta alpha beta", "zed");
  CHECK(formulate_query_baseline(cfg(BaselineMethod::full, QueryField::subject), req, index, 1) ==
        std::vector<std::string>{"alpha", "beta"});
  CHECK(formulate_query_baseline(cfg(BaselineMethod::full, QueryField::subject_body), req, index,
                                 1) == std::vector<std::string>{"alpha", "beta", "zed"});
  Message empty = make_message("e", "te", 999, "w@x", {"u@x"}, "", "zed");
  CHECK(formulate_query_baseline(cfg(BaselineMethod::full, QueryField::subject), empty, index, 1)
            .empty());
}

TEST_CASE("tf ranks by field frequency with lexicographic ties") {
  MailboxIndex index = fixture_index();
  Message req = make_message("r", "tr", 999, "w@x", {"u@x"}, "a a b c c c", "");
  CHECK(formulate_query_baseline(cfg(BaselineMethod::tf, QueryField::subject, 2), req, index, 1) ==
        std::vector<std::string>{"c", "a"});
  Message tie = make_message("r2", "tr", 999, "w@x", {"u@x"}, "b b a a", "");
  CHECK(formulate_query_baseline(cfg(BaselineMethod::tf, QueryField::subject, 1), tie, index, 1) ==
        std::vector<std::string>{"a"});
  // Oversized budgets return every unique term.
  CHECK(formulate_query_baseline(cfg(BaselineMethod::tf, QueryField::subject, 15), tie, index, 1)
            .size() == 2);
}

TEST_CASE("tfidf weights rare terms up and drops unindexed terms") {
  MailboxIndex index = fixture_index();
  Message req = make_message("r", "tr", 999, "w@x", {"u@x"}, "a a b", "");
  // tf*idf: a -> 2*ln(10/5) = 1.386, b -> 1*ln(10/1) = 2.303, so b leads.
  CHECK(formulate_query_baseline(cfg(BaselineMethod::tfidf, QueryField::subject, 2), req, index,
                                 1) == std::vector<std::string>{"b", "a"});
  Message with_unknown = make_message("r2", "tr", 999, "w@x", {"u@x"}, "a nope", "");
  CHECK(formulate_query_baseline(cfg(BaselineMethod::tfidf, QueryField::subject, 5), with_unknown,
                                 index, 1) == std::vector<std::string>{"a"});
}

TEST_CASE("logtfidf dampens the frequency factor") {
  MailboxIndex index = fixture_index();
  Message req = make_message("r", "tr", 999, "w@x", {"u@x"}, "a a b", "");
  const double score_a = std::log1p(2.0) * std::log(10.0 / 5.0);
  const double score_b = std::log1p(1.0) * std::log(10.0 / 1.0);
  REQUIRE(score_b > score_a);
  CHECK(formulate_query_baseline(cfg(BaselineMethod::logtfidf, QueryField::subject, 2), req, index,
                                 1) == std::vector<std::string>{"b", "a"});
}

TEST_CASE("relative entropy mixes field and collection distributions") {
  MailboxIndex index = fixture_index();
  Message req = make_message("r", "tr", 999, "w@x", {"u@x"}, "a a b", "");
  // lambda=0.5: p_l(a)=0.45833 scores 0.2778, p_l(b)=0.19167 scores 0.2575.
  const double pl_a = 0.5 * (2.0 / 3.0) + 0.5 * 0.25;
  const double pl_b = 0.5 * (1.0 / 3.0) + 0.5 * 0.05;
  const double score_a = pl_a * std::log(pl_a / 0.25);
  const double score_b = pl_b * std::log(pl_b / 0.05);
  REQUIRE(score_a > score_b);
  CHECK(formulate_query_baseline(
            cfg(BaselineMethod::relative_entropy, QueryField::subject, 2, 0, 0.5), req, index,
            1) == std::vector<std::string>{"a", "b"});
  // Terms with no collection mass are skipped rather than scored.
  Message with_unknown = make_message("r2", "tr", 999, "w@x", {"u@x"}, "a nope", "");
  CHECK(formulate_query_baseline(
            cfg(BaselineMethod::relative_entropy, QueryField::subject, 5, 0, 0.5), with_unknown,
            index, 1) == std::vector<std::string>{"a"});
}

TEST_CASE("random_k draws a deterministic uniform subset") {
  MailboxIndex index = fixture_index();
  Message req =
      make_message("r", "tr", 999, "w@x", {"u@x"}, "one two three four five six seven", "");
  auto config = cfg(BaselineMethod::random_k, QueryField::subject, 3);
  auto q1 = formulate_query_baseline(config, req, index, 42);
  auto q2 = formulate_query_baseline(config, req, index, 42);
  CHECK(q1 == q2);
  CHECK(q1.size() == 3);
  std::set<std::string> unique_terms = {"one", "two", "three", "four", "five", "six", "seven"};
  std::set<std::string> drawn(q1.begin(), q1.end());
  CHECK(drawn.size() == 3);  // no duplicates
  for (const auto& t : drawn) CHECK(unique_terms.count(t) == 1);

  bool any_differs = false;
  for (std::uint64_t seed = 0; seed < 10 && !any_differs; ++seed) {
    any_differs = formulate_query_baseline(config, req, index, seed) != q1;
  }
  CHECK(any_differs);

  // Budget at or above the term count returns everything.
  auto all = formulate_query_baseline(cfg(BaselineMethod::random_k, QueryField::subject, 7), req,
                                      index, 5);
  CHECK(std::set<std::string>(all.begin(), all.end()) == unique_terms);
}

TEST_CASE("random_pct sizes the draw by rounding the percentage up") {
  MailboxIndex index = fixture_index();
  Message seven =
      make_message("r", "tr", 999, "w@x", {"u@x"}, "one two three four five six seven", "");
  CHECK(formulate_query_baseline(cfg(BaselineMethod::random_pct, QueryField::subject, 0, 30),
                                 seven, index, 1)
            .size() == 3);  // ceil(0.3 * 7) = 3
  Message five = make_message("r5", "tr", 999, "w@x", {"u@x"}, "one two three four five", "");
  CHECK(formulate_query_baseline(cfg(BaselineMethod::random_pct, QueryField::subject, 0, 10), five,
                                 index, 1)
            .size() == 1);  // ceil(0.5) = 1
  Message four = make_message("r4", "tr", 999, "w@x", {"u@x"}, "one two three four", "");
  CHECK(formulate_query_baseline(cfg(BaselineMethod::random_pct, QueryField::subject, 0, 50), four,
                                 index, 1)
            .size() == 2);
}

TEST_CASE("uniform_index stays in range, is deterministic, and covers all buckets") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) CHECK(uniform_index(rng, 5) < 5);
  std::mt19937_64 a(3), b(3);
  for (int i = 0; i < 100; ++i) CHECK(uniform_index(a, 1000) == uniform_index(b, 1000));
  CHECK(uniform_index(rng, 1) == 0);

  std::map<std::uint64_t, int> buckets;
  std::mt19937_64 rng2(11);
  for (int i = 0; i < 4000; ++i) buckets[uniform_index(rng2, 4)]++;
  REQUIRE(buckets.size() == 4);
  for (const auto& [value, count] : buckets) CHECK(count > 700);  // loose uniformity
}

TEST_CASE("the sweep grid enumerates 603 distinct configurations") {
  std::vector<BaselineConfig> grid = baseline_grid();
  CHECK(grid.size() == 603);

  std::set<std::string> names;
  std::map<BaselineMethod, int> per_method;
  for (const auto& c : grid) {
    names.insert(config_name(c));
    per_method[c.method]++;
  }
  CHECK(names.size() == 603);
  CHECK(per_method[BaselineMethod::full] == 3);
  CHECK(per_method[BaselineMethod::tf] == 45);
  CHECK(per_method[BaselineMethod::tfidf] == 45);
  CHECK(per_method[BaselineMethod::logtfidf] == 45);
  CHECK(per_method[BaselineMethod::random_k] == 45);
  CHECK(per_method[BaselineMethod::relative_entropy] == 405);
  CHECK(per_method[BaselineMethod::random_pct] == 15);
}

TEST_CASE("config names round-trip through the parser across the whole grid") {
  for (const auto& c : baseline_grid()) {
    BaselineConfig round = parse_config_name(config_name(c));
    CHECK(round.method == c.method);
    CHECK(round.field == c.field);
    CHECK(round.k == c.k);
    CHECK(round.percent == c.percent);
    CHECK(round.lambda == doctest::Approx(c.lambda));
    CHECK(config_name(round) == config_name(c));
  }
  CHECK_THROWS_AS(parse_config_name("bogus"), ValidationError);
  CHECK_THROWS_AS(parse_config_name("tf[subject]"), ValidationError);
  CHECK_THROWS_AS(parse_config_name(""), ValidationError);
}

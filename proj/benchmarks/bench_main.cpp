// Microbenchmarks for the hot paths: mailbox indexing, retrieval, item
// ranking, silver synthesis, and the neural scorer. All inputs come from the
// deterministic synthetic corpus generator.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <string>
#include <vector>

#include "attachrec/corpus.hpp"
#include "attachrec/features.hpp"
#include "attachrec/neural.hpp"
#include "attachrec/retrieval.hpp"
#include "attachrec/silver.hpp"
#include "attachrec/synthetic.hpp"

namespace {

using namespace attachrec;

struct BenchFixture {
  SyntheticSpec spec;
  Corpus corpus;
  std::string user;
  MailboxIndex full_index;
  std::int64_t t_end = 0;
  std::vector<std::string> query;  // two terms present in the mailbox

  CollectionStats stats;
  Vocabulary vocab;
  LexiconTagger tagger;
  std::vector<MessageFeatures> pool;
  std::vector<TrainingPair> pairs;
  TermRankingModel model;
  TrainingConfig tconfig;

  Instance instance;
  MailboxIndex sliced;

  BenchFixture() {
    corpus = generate_synthetic_corpus(spec, 7);
    user = corpus.mailboxes.begin()->first;
    full_index = build_index(corpus, user);
    for (const DocMeta& d : full_index.docs) t_end = std::max(t_end, d.timestamp);
    ++t_end;
    const Message& first = corpus.messages[corpus.mailboxes.at(user).front()];
    query = {first.body_tokens.at(0), first.body_tokens.at(1)};

    stats = build_collection_stats(corpus);
    vocab = build_vocabulary(stats, 60000);
    for (std::size_t i = 0; i < 4; ++i) {
      const Message& m = corpus.messages[corpus.mailboxes.at(user)[i]];
      pool.push_back(compute_message_features(m, stats, vocab, tagger));
      pairs.push_back({i, {pool.back().tokens.front()}, 1.0, m.message_id});
    }
    ModelConfig mconfig;
    mconfig.embedding_dim = 16;
    mconfig.hidden = 64;
    mconfig.dropout_p = 0.0;
    mconfig.vocab_rows = vocab.row_count();
    model = init_model(mconfig, 11, vocab);
    tconfig.seed = 11;

    const MiningResult mined = mine_instances(corpus, trim_item_outliers(corpus));
    instance = mined.instances.front();
    sliced = slice_before(build_index(corpus, instance.replier), instance.t_prime);
  }
};

const BenchFixture& fixture() {
  static BenchFixture f;
  return f;
}

void BM_BuildIndex(benchmark::State& state) {
  const BenchFixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(build_index(f.corpus, f.user));
}

void BM_SliceBefore(benchmark::State& state) {
  const BenchFixture& f = fixture();
  const std::int64_t mid = f.full_index.docs[f.full_index.docs.size() / 2].timestamp;
  for (auto _ : state) benchmark::DoNotOptimize(slice_before(f.full_index, mid));
}

void BM_Search(benchmark::State& state) {
  const BenchFixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(search(f.full_index, f.query, f.t_end, 1000));
}

void BM_RankItems(benchmark::State& state) {
  const BenchFixture& f = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(rank_items(f.full_index, f.query, f.t_end, 1000, 100));
}

void BM_SynthesizeSilver(benchmark::State& state) {
  const BenchFixture& f = fixture();
  const MailboxIndex full = build_index(f.corpus, f.instance.replier);
  const std::string item = *f.instance.relevant_items.begin();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        synthesize_silver(f.corpus, full, f.sliced, f.instance, item, 8, 42));
  }
}

void BM_MessageFeatures(benchmark::State& state) {
  const BenchFixture& f = fixture();
  const Message& m = f.corpus.messages[f.corpus.mailboxes.at(f.user).front()];
  for (auto _ : state)
    benchmark::DoNotOptimize(compute_message_features(m, f.stats, f.vocab, f.tagger));
}

void BM_Forward(benchmark::State& state) {
  const BenchFixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(forward(f.model, f.pool.front()));
}

void BM_LossWithGradients(benchmark::State& state) {
  const BenchFixture& f = fixture();
  const LossOptions options{false, true, true};
  for (auto _ : state)
    benchmark::DoNotOptimize(compute_loss(f.model, f.pairs, f.pool, f.tconfig, options, nullptr));
}

BENCHMARK(BM_BuildIndex);
BENCHMARK(BM_SliceBefore);
BENCHMARK(BM_Search);
BENCHMARK(BM_RankItems);
BENCHMARK(BM_SynthesizeSilver);
BENCHMARK(BM_MessageFeatures);
BENCHMARK(BM_Forward);
BENCHMARK(BM_LossWithGradients);

}  // namespace

BENCHMARK_MAIN();

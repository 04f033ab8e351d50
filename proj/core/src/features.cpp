#include "attachrec/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "attachrec/binio.hpp"
#include "attachrec/errors.hpp"

namespace attachrec {

const std::array<const char*, kAuxFeatureCount> kAuxFeatureNames = {
    "is_noun", "is_verb", "is_other", "is_subject", "is_body", "abs_tf", "rel_tf",
    "rel_pos", "is_oov_repr", "idf", "tf_idf", "abs_cf", "rel_cf", "rel_entropy",
    "scq", "ictf", "pointwise_scs",
};

const std::array<bool, kAuxFeatureCount> kAuxFeatureIsFlag = {
    true, true, true, true, true, false, false, false, true,
    false, false, false, false, false, false, false, false,
};

double CollectionStats::collection_prob(const std::string& term) const {
  auto it = cf.find(term);
  if (it == cf.end() || total_tokens == 0) return 0.0;
  return double(it->second) / double(total_tokens);
}

CollectionStats build_collection_stats(const Corpus& corpus) {
  CollectionStats stats;
  stats.message_count = corpus.messages.size();
  for (const Message& m : corpus.messages) {
    std::map<std::string, std::uint64_t> tf;
    for (const auto& t : m.subject_tokens) tf[t]++;
    for (const auto& t : m.body_tokens) tf[t]++;
    for (const auto& [term, count] : tf) {
      stats.df[term] += 1;
      stats.cf[term] += count;
      stats.total_tokens += count;
    }
  }
  return stats;
}

std::uint32_t Vocabulary::id_of(const std::string& term) const {
  auto it = index.find(term);
  return it == index.end() ? oov_id() : it->second;
}

std::uint64_t Vocabulary::content_hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& t : terms) {
    h = fnv1a64(t) ^ (h * 1099511628211ull);
  }
  return h;
}

Vocabulary build_vocabulary(const CollectionStats& stats, std::size_t max_terms) {
  struct Entry {
    std::uint64_t cf;
    const std::string* term;
  };
  std::vector<Entry> entries;
  entries.reserve(stats.cf.size());
  for (const auto& [term, cf] : stats.cf) entries.push_back({cf, &term});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.cf != b.cf) return a.cf > b.cf;
    return *a.term < *b.term;
  });
  if (entries.size() > max_terms) entries.resize(max_terms);
  Vocabulary vocab;
  vocab.terms.reserve(entries.size());
  for (const Entry& e : entries) {
    vocab.index.emplace(*e.term, std::uint32_t(vocab.terms.size()));
    vocab.terms.push_back(*e.term);
  }
  return vocab;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExecutionError("cannot write vocabulary: " + path);
  for (const auto& t : vocab.terms) out << t << "\n";
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open vocabulary: " + path);
  Vocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    vocab.index.emplace(line, std::uint32_t(vocab.terms.size()));
    vocab.terms.push_back(line);
  }
  return vocab;
}

std::string LexiconTagger::version() const { return "1"; }

Eigen::MatrixXd compute_raw_features(const Message& message, const CollectionStats& stats,
                                     const Vocabulary& vocab, const Tagger& tagger) {
  std::vector<std::string> tokens = message.subject_tokens;
  tokens.insert(tokens.end(), message.body_tokens.begin(), message.body_tokens.end());
  const std::size_t n = tokens.size();
  if (n == 0) throw ValidationError("cannot compute features for empty message " + message.message_id);

  std::map<std::string, double> tf;
  for (const auto& t : tokens) tf[t] += 1.0;
  const double len = double(n);
  const double total = double(stats.total_tokens);
  const double ncoll = double(stats.message_count);

  Eigen::MatrixXd feats(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kAuxFeatureCount));
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& t = tokens[i];
    auto df_it = stats.df.find(t);
    auto cf_it = stats.cf.find(t);
    if (df_it == stats.df.end() || cf_it == stats.cf.end() || df_it->second == 0 || cf_it->second == 0)
      throw ValidationError("term '" + t + "' of message " + message.message_id +
                            " is absent from the collection statistics");
    const double df = double(df_it->second);
    const double cf = double(cf_it->second);
    const double p_coll = cf / total;
    const double abs_tf = tf.at(t);
    const double rel_tf = abs_tf / len;
    const double idf = std::log(ncoll / df);
    const double p_lambda = 0.5 * rel_tf + 0.5 * p_coll;
    const PosTag pos = tagger.tag(t);

    feats(Eigen::Index(i), kFeatIsNoun) = pos == PosTag::noun ? 1.0 : 0.0;
    feats(Eigen::Index(i), kFeatIsVerb) = pos == PosTag::verb ? 1.0 : 0.0;
    feats(Eigen::Index(i), kFeatIsOther) = pos == PosTag::other ? 1.0 : 0.0;
    feats(Eigen::Index(i), kFeatIsSubject) = i < message.subject_tokens.size() ? 1.0 : 0.0;
    feats(Eigen::Index(i), kFeatIsBody) = i < message.subject_tokens.size() ? 0.0 : 1.0;
    feats(Eigen::Index(i), kFeatAbsTf) = abs_tf;
    feats(Eigen::Index(i), kFeatRelTf) = rel_tf;
    feats(Eigen::Index(i), kFeatRelPos) = n == 1 ? 0.0 : double(i) / double(n - 1);
    feats(Eigen::Index(i), kFeatIsOovRepr) = vocab.contains(t) ? 0.0 : 1.0;
    feats(Eigen::Index(i), kFeatIdf) = idf;
    feats(Eigen::Index(i), kFeatTfIdf) = abs_tf * idf;
    feats(Eigen::Index(i), kFeatAbsCf) = cf;
    feats(Eigen::Index(i), kFeatRelCf) = p_coll;
    feats(Eigen::Index(i), kFeatRelEntropy) = p_lambda * std::log(p_lambda / p_coll);
    feats(Eigen::Index(i), kFeatScq) = (1.0 + std::log(cf)) * idf;
    feats(Eigen::Index(i), kFeatIctf) = std::log(total / cf);
    feats(Eigen::Index(i), kFeatPointwiseScs) = rel_tf * std::log2(rel_tf / p_coll);
  }
  return feats;
}

void scale_features(Eigen::MatrixXd& features) {
  for (std::size_t c = 0; c < kAuxFeatureCount; ++c) {
    if (kAuxFeatureIsFlag[c]) continue;
    auto col = features.col(Eigen::Index(c));
    const double lo = col.minCoeff();
    const double hi = col.maxCoeff();
    if (hi == lo) {
      col.setZero();
    } else {
      col = (col.array() - lo) / (hi - lo);
    }
  }
}

MessageFeatures compute_message_features(const Message& message, const CollectionStats& stats,
                                         const Vocabulary& vocab, const Tagger& tagger) {
  MessageFeatures mf;
  mf.message_id = message.message_id;
  mf.tokens = message.subject_tokens;
  mf.tokens.insert(mf.tokens.end(), message.body_tokens.begin(), message.body_tokens.end());
  mf.subject_length = message.subject_tokens.size();
  mf.vocab_ids.reserve(mf.tokens.size());
  for (const auto& t : mf.tokens) mf.vocab_ids.push_back(vocab.id_of(t));
  mf.aux = compute_raw_features(message, stats, vocab, tagger);
  scale_features(mf.aux);
  return mf;
}

namespace {

constexpr char kFeatureMagic[5] = "ARFM";
constexpr std::uint32_t kFeatureVersion = 1;

}  // namespace

void save_feature_records(const std::vector<FeatureRecord>& records, const Tagger& tagger,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExecutionError("cannot write feature records: " + path);
  BinaryWriter w(out);
  w.magic(kFeatureMagic, kFeatureVersion);
  w.str(tagger.name());
  w.str(tagger.version());
  std::vector<std::string> columns;
  for (const char* c : kAuxFeatureNames) columns.push_back(c);
  w.str_vec(columns);
  w.u64(records.size());
  for (const FeatureRecord& rec : records) {
    w.str(rec.instance_id);
    w.str(rec.features.message_id);
    w.str_vec(rec.features.tokens);
    w.u64(rec.features.subject_length);
    w.u64(rec.features.vocab_ids.size());
    for (std::uint32_t id : rec.features.vocab_ids) w.u32(id);
    w.u64(std::uint64_t(rec.features.aux.rows()));
    for (Eigen::Index r = 0; r < rec.features.aux.rows(); ++r)
      for (Eigen::Index c = 0; c < rec.features.aux.cols(); ++c) w.f64(rec.features.aux(r, c));
  }
}

std::vector<FeatureRecord> load_feature_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open feature records: " + path);
  BinaryReader r(in);
  r.magic(kFeatureMagic, kFeatureVersion);
  r.str();  // tagger name
  r.str();  // tagger version
  std::vector<std::string> columns = r.str_vec();
  if (columns.size() != kAuxFeatureCount)
    throw ValidationError("feature record column count mismatch");
  std::vector<FeatureRecord> records;
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    FeatureRecord rec;
    rec.instance_id = r.str();
    rec.features.message_id = r.str();
    rec.features.tokens = r.str_vec();
    rec.features.subject_length = std::size_t(r.u64());
    const std::uint64_t nv = r.u64();
    for (std::uint64_t k = 0; k < nv; ++k) rec.features.vocab_ids.push_back(r.u32());
    const std::uint64_t rows = r.u64();
    rec.features.aux.resize(Eigen::Index(rows), Eigen::Index(kAuxFeatureCount));
    for (Eigen::Index rr = 0; rr < rec.features.aux.rows(); ++rr)
      for (Eigen::Index c = 0; c < rec.features.aux.cols(); ++c) rec.features.aux(rr, c) = r.f64();
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace attachrec

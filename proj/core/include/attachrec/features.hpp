#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "attachrec/corpus.hpp"

namespace attachrec {

struct CollectionStats {
  std::uint64_t message_count = 0;
  std::uint64_t total_tokens = 0;
  std::map<std::string, std::uint64_t> df;
  std::map<std::string, std::uint64_t> cf;

  double collection_prob(const std::string& term) const;  // cf / total
};

// Exact counts over every tokenized message (subject and body jointly).
CollectionStats build_collection_stats(const Corpus& corpus);

// The max_terms most frequent collection terms (ties lexicographic), plus a
// shared out-of-vocabulary id and a padding id for context windows.
struct Vocabulary {
  std::vector<std::string> terms;
  std::map<std::string, std::uint32_t> index;

  std::uint32_t oov_id() const { return std::uint32_t(terms.size()); }
  std::uint32_t pad_id() const { return std::uint32_t(terms.size()) + 1; }
  std::uint32_t row_count() const { return std::uint32_t(terms.size()) + 2; }
  std::uint32_t id_of(const std::string& term) const;
  bool contains(const std::string& term) const { return index.count(term) != 0; }
  std::uint64_t content_hash() const;
};

Vocabulary build_vocabulary(const CollectionStats& stats, std::size_t max_terms = 60000);
void save_vocabulary(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

enum class PosTag : std::uint8_t { noun = 0, verb = 1, other = 2 };

class Tagger {
public:
  virtual ~Tagger() = default;
  virtual PosTag tag(const std::string& token) const = 0;
  virtual std::string name() const = 0;
  virtual std::string version() const = 0;
};

// Context-free lookup in embedded noun/verb word lists; noun wins when a word
// is in both, anything unknown is "other".
class LexiconTagger : public Tagger {
public:
  PosTag tag(const std::string& token) const override;
  std::string name() const override { return "lexicon"; }
  std::string version() const override;
};

class ConstantTagger : public Tagger {
public:
  PosTag tag(const std::string&) const override { return PosTag::other; }
  std::string name() const override { return "constant"; }
  std::string version() const override { return "1"; }
};

inline constexpr std::size_t kAuxFeatureCount = 17;
// Fixed column order of the auxiliary feature block.
extern const std::array<const char*, kAuxFeatureCount> kAuxFeatureNames;
// Boolean columns are exempt from min-max scaling.
extern const std::array<bool, kAuxFeatureCount> kAuxFeatureIsFlag;

enum AuxFeature : std::size_t {
  kFeatIsNoun = 0,
  kFeatIsVerb,
  kFeatIsOther,
  kFeatIsSubject,
  kFeatIsBody,
  kFeatAbsTf,
  kFeatRelTf,
  kFeatRelPos,
  kFeatIsOovRepr,
  kFeatIdf,
  kFeatTfIdf,
  kFeatAbsCf,
  kFeatRelCf,
  kFeatRelEntropy,
  kFeatScq,
  kFeatIctf,
  kFeatPointwiseScs,
};

struct MessageFeatures {
  std::string message_id;
  std::vector<std::string> tokens;          // subject tokens then body tokens
  std::vector<std::uint32_t> vocab_ids;     // per occurrence; OOV mapped to oov_id
  std::size_t subject_length = 0;
  Eigen::MatrixXd aux;                      // tokens.size() x kAuxFeatureCount, scaled
};

// Raw (unscaled) feature rows in the fixed column order. Throws
// ValidationError if a message term is absent from the collection stats.
Eigen::MatrixXd compute_raw_features(const Message& message, const CollectionStats& stats,
                                     const Vocabulary& vocab, const Tagger& tagger);

// In-place min-max scaling of the real-valued columns at message level;
// constant columns become 0, boolean flags are untouched.
void scale_features(Eigen::MatrixXd& features);

MessageFeatures compute_message_features(const Message& message, const CollectionStats& stats,
                                         const Vocabulary& vocab, const Tagger& tagger);

// Versioned dense container for per-instance feature matrices.
struct FeatureRecord {
  std::string instance_id;
  MessageFeatures features;
};

void save_feature_records(const std::vector<FeatureRecord>& records, const Tagger& tagger,
                          const std::string& path);
std::vector<FeatureRecord> load_feature_records(const std::string& path);

}  // namespace attachrec

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "attachrec/features.hpp"

namespace attachrec {

enum class ModelKind : std::uint8_t {
  listwise,   // term scores + end-of-ranking score, softmax over all of them
  pointwise,  // term scores only, logistic output per occurrence
};

// Input ablation switches. A disabled slot or column is fed as zeros; input
// dimensionality never changes.
struct FeatureMask {
  bool term = true;     // the center embedding slot
  bool context = true;  // the 2L surrounding embedding slots
  std::array<bool, kAuxFeatureCount> aux;

  FeatureMask() { aux.fill(true); }
  static FeatureMask full() { return FeatureMask{}; }
  // Named groups: "M" (message columns), "C" (collection columns), "PoS"
  // (part-of-speech flags), "term", "context", "term_context".
  static FeatureMask for_category(const std::string& category);
};

struct ModelConfig {
  ModelKind kind = ModelKind::listwise;
  std::size_t context_width = 3;  // L; each occurrence sees 2L+1 positions
  std::size_t embedding_dim = 128;
  std::size_t hidden = 512;  // both hidden layers
  double dropout_p = 0.5;
  std::size_t vocab_rows = 0;  // vocabulary terms + OOV row + padding row
  FeatureMask mask;

  std::size_t input_dim() const {
    return (2 * context_width + 1) * embedding_dim + kAuxFeatureCount;
  }
  // Boundary validation for externally supplied configs; the context width
  // must sit on the odd grid {3,5,...,15}.
  void validate() const;
};

struct TrainingConfig {
  double adam_alpha = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double reg_lambda = 0.1;  // loss adds (1/(2*lambda)) * sum of squared weights
  double alpha_eor = 0.95;  // target mass spread over the silver terms
  std::uint64_t seed = 0;

  double reg_coefficient() const { return 1.0 / (2.0 * reg_lambda); }
  void validate() const;
};

struct ScorerParams {
  Eigen::MatrixXd w1;  // hidden x input_dim
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // hidden x hidden
  Eigen::VectorXd b2;
  Eigen::VectorXd w3;  // hidden
  double b3 = 0.0;
};

struct TermRankingModel {
  ModelConfig config;
  std::uint64_t vocab_hash = 0;
  Eigen::MatrixXd embeddings;  // vocab_rows x embedding_dim
  ScorerParams term_scorer;    // per-occurrence score
  ScorerParams eor_scorer;     // end-of-ranking score (listwise only)

  // Training metadata.
  std::uint64_t seed = 0;
  std::size_t chosen_epoch = 0;  // 1-based; 0 when never trained
  std::vector<double> validation_losses;
  double threshold = std::numeric_limits<double>::quiet_NaN();  // pointwise cut
};

struct ModelGradients {
  Eigen::MatrixXd embeddings;
  ScorerParams term_scorer;
  ScorerParams eor_scorer;
};

// Flat view over the tensors a model kind actually uses, in a fixed order
// (embeddings, then each scorer's w1,b1,w2,b2,w3,b3). The same order is used
// by the optimizer, the checkpoint format, and gradient checks.
struct TensorView {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
  bool is_weight = false;  // participates in the squared-weight regularizer
};
std::vector<TensorView> parameter_tensors(TermRankingModel& model);
std::vector<TensorView> gradient_tensors(ModelGradients& grads, ModelKind kind);
ModelGradients make_gradients(const TermRankingModel& model);

TermRankingModel init_model(const ModelConfig& config, std::uint64_t seed,
                            const Vocabulary& vocab);

struct TermDistribution {
  std::vector<double> raw_scores;     // n term scores; listwise appends EoR at n
  std::vector<double> probabilities;  // listwise: n+1 softmax entries
};

// Listwise forward pass. train_mode applies inverted dropout using rng; pass
// rng = nullptr in inference mode.
TermDistribution forward(const TermRankingModel& model, const MessageFeatures& features,
                         bool train_mode = false, std::mt19937_64* rng = nullptr);

// Pointwise forward pass: logistic score per occurrence.
std::vector<double> forward_pointwise(const TermRankingModel& model,
                                      const MessageFeatures& features, bool train_mode = false,
                                      std::mt19937_64* rng = nullptr);

// Per-occurrence target distribution of length n+1: mass alpha_eor split
// equally over the silver terms (then equally over each term's occurrences),
// the remainder on the end-of-ranking entry.
std::vector<double> target_distribution(const MessageFeatures& features,
                                        const std::vector<std::string>& silver_terms,
                                        double alpha_eor);

struct TrainingPair {
  std::size_t features_index = 0;  // into the features pool
  std::vector<std::string> terms;  // silver query
  double weight = 0.0;             // silver score
  std::string id;                  // for diagnostics
};

struct LossOptions {
  bool dropout = false;
  bool regularize = true;
  bool gradients = true;
};

struct LossResult {
  double loss = 0.0;       // includes the regularizer when enabled
  double data_loss = 0.0;  // weighted average pair loss only
  ModelGradients grads;
};

LossResult compute_loss(const TermRankingModel& model, const std::vector<TrainingPair>& batch,
                        const std::vector<MessageFeatures>& pool, const TrainingConfig& config,
                        const LossOptions& options, std::mt19937_64* rng);

// Adam over shuffled batches; after each epoch the validation data loss is
// recorded and the checkpoint with the lowest one (earliest on ties) is kept.
// Pointwise models additionally receive a decision threshold from a
// validation F1 sweep.
TermRankingModel train_model(const std::vector<TrainingPair>& train_pairs,
                             const std::vector<TrainingPair>& validation_pairs,
                             const std::vector<MessageFeatures>& pool, const ModelConfig& mconfig,
                             const TrainingConfig& tconfig, const Vocabulary& vocab);

// Ranking cut: occurrences and the end-of-ranking entry ordered by raw score
// descending (ties by position, the end-of-ranking entry last); terms ranked
// above it are kept and deduplicated in rank order.
std::vector<std::string> select_query_terms(const std::vector<double>& term_scores,
                                            double eor_score,
                                            const std::vector<std::string>& tokens);
std::vector<std::string> formulate_query_cnn(const TermRankingModel& model,
                                             const MessageFeatures& features);

struct ThresholdSweep {
  double threshold = 0.0;
  double f1 = 0.0;
};
// Candidates are every distinct score plus one value below the minimum; a
// prediction is positive when score > threshold; best F1 wins, ties broken
// toward the largest threshold.
ThresholdSweep sweep_threshold(const std::vector<double>& scores,
                               const std::vector<std::uint8_t>& labels);

// Unique terms whose maximum occurrence score exceeds the model threshold,
// ordered by that maximum descending (ties by first occurrence).
std::vector<std::string> formulate_query_pointwise(const TermRankingModel& model,
                                                   const MessageFeatures& features);
std::vector<std::string> formulate_query_pointwise(const TermRankingModel& model,
                                                   const MessageFeatures& features,
                                                   double threshold);

void save_model(const TermRankingModel& model, const std::string& path);
TermRankingModel load_model(const std::string& path);

}  // namespace attachrec

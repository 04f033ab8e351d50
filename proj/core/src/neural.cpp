#include "attachrec/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <unordered_set>
#include <utility>

#include "attachrec/baselines.hpp"
#include "attachrec/binio.hpp"
#include "attachrec/errors.hpp"

namespace attachrec {

namespace {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void glorot_fill(double* data, std::size_t size, std::size_t fan_in, std::size_t fan_out,
                 std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < size; ++i) {
    data[i] = (2.0 * uniform01(rng) - 1.0) * bound;
  }
}

// One two-layer scoring head applied to a column-per-occurrence input block.
struct ScorerCache {
  Eigen::MatrixXd xt;  // input_dim x n
  Eigen::MatrixXd a1, m1, z1, a2, m2, z2;
  Eigen::VectorXd s;
};

Eigen::MatrixXd draw_dropout(std::size_t rows, std::size_t cols, double p,
                             std::mt19937_64& rng) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const double scale = 1.0 / (1.0 - p);
  // Column by column: per occurrence, then per hidden unit.
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m(r, c) = uniform01(rng) >= p ? scale : 0.0;
    }
  }
  return m;
}

ScorerCache scorer_forward(const ScorerParams& p, Eigen::MatrixXd xt, bool dropout,
                           double dropout_p, std::mt19937_64* rng) {
  ScorerCache c;
  c.xt = std::move(xt);
  const std::size_t h = static_cast<std::size_t>(p.b1.size());
  const std::size_t n = static_cast<std::size_t>(c.xt.cols());
  c.a1 = (p.w1 * c.xt).colwise() + p.b1;
  c.z1 = c.a1.unaryExpr([](double v) { return softplus(v); });
  if (dropout) {
    c.m1 = draw_dropout(h, n, dropout_p, *rng);
    c.z1 = c.z1.cwiseProduct(c.m1);
  }
  c.a2 = (p.w2 * c.z1).colwise() + p.b2;
  c.z2 = c.a2.unaryExpr([](double v) { return softplus(v); });
  if (dropout) {
    c.m2 = draw_dropout(h, n, dropout_p, *rng);
    c.z2 = c.z2.cwiseProduct(c.m2);
  }
  c.s = c.z2.transpose() * p.w3;
  c.s.array() += p.b3;
  return c;
}

// Accumulates parameter gradients for one head; returns d(loss)/d(input).
Eigen::MatrixXd scorer_backward(const ScorerParams& p, const ScorerCache& c,
                                const Eigen::VectorXd& ds, ScorerParams& g) {
  g.w3 += c.z2 * ds;
  g.b3 += ds.sum();
  Eigen::MatrixXd da2 = (p.w3 * ds.transpose())
                            .cwiseProduct(c.a2.unaryExpr([](double v) { return sigmoid(v); }));
  if (c.m2.size() > 0) da2 = da2.cwiseProduct(c.m2);
  g.w2 += da2 * c.z1.transpose();
  g.b2 += da2.rowwise().sum();
  Eigen::MatrixXd da1 = (p.w2.transpose() * da2)
                            .cwiseProduct(c.a1.unaryExpr([](double v) { return sigmoid(v); }));
  if (c.m1.size() > 0) da1 = da1.cwiseProduct(c.m1);
  g.w1 += da1 * c.xt.transpose();
  g.b1 += da1.rowwise().sum();
  return p.w1.transpose() * da1;
}

ScorerParams zero_scorer_like(const ScorerParams& p) {
  ScorerParams z;
  z.w1 = Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols());
  z.b1 = Eigen::VectorXd::Zero(p.b1.size());
  z.w2 = Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols());
  z.b2 = Eigen::VectorXd::Zero(p.b2.size());
  z.w3 = Eigen::VectorXd::Zero(p.w3.size());
  z.b3 = 0.0;
  return z;
}

void append_scorer_tensors(ScorerParams& p, const std::string& prefix,
                           std::vector<TensorView>& out) {
  out.push_back({prefix + ".w1", p.w1.data(), static_cast<std::size_t>(p.w1.size()), true});
  out.push_back({prefix + ".b1", p.b1.data(), static_cast<std::size_t>(p.b1.size()), false});
  out.push_back({prefix + ".w2", p.w2.data(), static_cast<std::size_t>(p.w2.size()), true});
  out.push_back({prefix + ".b2", p.b2.data(), static_cast<std::size_t>(p.b2.size()), false});
  out.push_back({prefix + ".w3", p.w3.data(), static_cast<std::size_t>(p.w3.size()), true});
  out.push_back({prefix + ".b3", &p.b3, 1, false});
}

// Occurrence k's input row: 2L+1 embedding slots around position k (the
// padding row past either end), then the auxiliary columns, with disabled
// slots and columns left at zero.
Eigen::MatrixXd build_input_matrix(const TermRankingModel& model,
                                   const MessageFeatures& features) {
  const ModelConfig& cfg = model.config;
  const std::size_t n = features.tokens.size();
  const std::size_t e = cfg.embedding_dim;
  const std::size_t slots = 2 * cfg.context_width + 1;
  const std::size_t pad_row = cfg.vocab_rows - 1;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                            static_cast<Eigen::Index>(cfg.input_dim()));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < slots; ++j) {
      const std::ptrdiff_t off =
          static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(cfg.context_width);
      if (off == 0 && !cfg.mask.term) continue;
      if (off != 0 && !cfg.mask.context) continue;
      const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(k) + off;
      std::size_t row = pad_row;
      if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(n)) {
        row = features.vocab_ids[static_cast<std::size_t>(pos)];
      }
      if (row >= cfg.vocab_rows) {
        throw ExecutionError("vocabulary id out of range in message " + features.message_id);
      }
      x.block(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j * e), 1,
              static_cast<Eigen::Index>(e)) = model.embeddings.row(static_cast<Eigen::Index>(row));
    }
    for (std::size_t a = 0; a < kAuxFeatureCount; ++a) {
      if (!cfg.mask.aux[a]) continue;
      x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(slots * e + a)) =
          features.aux(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(a));
    }
  }
  return x;
}

// Adds the occurrence-level input gradient back into the embedding rows that
// produced it, skipping disabled slots.
void accumulate_embedding_grads(const TermRankingModel& model, const MessageFeatures& features,
                                const Eigen::MatrixXd& dxt, ModelGradients& grads) {
  const ModelConfig& cfg = model.config;
  const std::size_t n = features.tokens.size();
  const std::size_t e = cfg.embedding_dim;
  const std::size_t slots = 2 * cfg.context_width + 1;
  const std::size_t pad_row = cfg.vocab_rows - 1;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < slots; ++j) {
      const std::ptrdiff_t off =
          static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(cfg.context_width);
      if (off == 0 && !cfg.mask.term) continue;
      if (off != 0 && !cfg.mask.context) continue;
      const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(k) + off;
      std::size_t row = pad_row;
      if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(n)) {
        row = features.vocab_ids[static_cast<std::size_t>(pos)];
      }
      grads.embeddings.row(static_cast<Eigen::Index>(row)) +=
          dxt.col(static_cast<Eigen::Index>(k))
              .segment(static_cast<Eigen::Index>(j * e), static_cast<Eigen::Index>(e))
              .transpose();
    }
  }
}

std::unordered_set<std::string> silver_set_checked(const MessageFeatures& features,
                                                  const std::vector<std::string>& terms) {
  std::unordered_set<std::string> present(features.tokens.begin(), features.tokens.end());
  std::unordered_set<std::string> out;
  for (const std::string& t : terms) {
    if (!present.count(t)) {
      throw ValidationError("silver term absent from message " + features.message_id + ": " + t);
    }
    out.insert(t);
  }
  return out;
}

double stable_bce(double logit, double target) {
  // -[y log sigmoid(s) + (1-y) log(1 - sigmoid(s))]
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

}  // namespace

FeatureMask FeatureMask::for_category(const std::string& category) {
  FeatureMask m;
  auto off = [&m](std::initializer_list<std::size_t> cols) {
    for (const std::size_t c : cols) m.aux[c] = false;
  };
  if (category == "full") {
    // everything enabled
  } else if (category == "M") {
    off({kFeatIsSubject, kFeatIsBody, kFeatAbsTf, kFeatRelTf, kFeatRelPos, kFeatIsOovRepr});
  } else if (category == "C") {
    off({kFeatIdf, kFeatTfIdf, kFeatAbsCf, kFeatRelCf, kFeatRelEntropy, kFeatScq, kFeatIctf,
         kFeatPointwiseScs});
  } else if (category == "PoS") {
    off({kFeatIsNoun, kFeatIsVerb, kFeatIsOther});
  } else if (category == "term") {
    m.term = false;
  } else if (category == "context") {
    m.context = false;
  } else if (category == "term_context") {
    m.term = false;
    m.context = false;
  } else {
    throw ValidationError("unknown ablation category: " + category);
  }
  return m;
}

void ModelConfig::validate() const {
  if (context_width < 3 || context_width > 15 || context_width % 2 == 0) {
    throw ValidationError("context width must be one of 3,5,...,15");
  }
  if (embedding_dim == 0 || hidden == 0) {
    throw ValidationError("model dimensions must be positive");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw ValidationError("dropout probability must be in [0, 1)");
  }
}

void TrainingConfig::validate() const {
  if (adam_alpha <= 0.0 || adam_beta1 <= 0.0 || adam_beta2 <= 0.0 || adam_eps <= 0.0) {
    throw ValidationError("optimizer constants must be positive");
  }
  if (epochs == 0 || batch_size == 0) {
    throw ValidationError("epochs and batch size must be positive");
  }
  if (reg_lambda <= 0.0) throw ValidationError("regularization lambda must be positive");
  if (!(alpha_eor > 0.0 && alpha_eor < 1.0)) {
    throw ValidationError("end-of-ranking mass must lie in (0, 1)");
  }
}

std::vector<TensorView> parameter_tensors(TermRankingModel& model) {
  std::vector<TensorView> out;
  out.push_back({"embeddings", model.embeddings.data(),
                 static_cast<std::size_t>(model.embeddings.size()), true});
  append_scorer_tensors(model.term_scorer, "term", out);
  if (model.config.kind == ModelKind::listwise) {
    append_scorer_tensors(model.eor_scorer, "eor", out);
  }
  return out;
}

std::vector<TensorView> gradient_tensors(ModelGradients& grads, ModelKind kind) {
  std::vector<TensorView> out;
  out.push_back({"embeddings", grads.embeddings.data(),
                 static_cast<std::size_t>(grads.embeddings.size()), true});
  append_scorer_tensors(grads.term_scorer, "term", out);
  if (kind == ModelKind::listwise) append_scorer_tensors(grads.eor_scorer, "eor", out);
  return out;
}

ModelGradients make_gradients(const TermRankingModel& model) {
  ModelGradients g;
  g.embeddings = Eigen::MatrixXd::Zero(model.embeddings.rows(), model.embeddings.cols());
  g.term_scorer = zero_scorer_like(model.term_scorer);
  if (model.config.kind == ModelKind::listwise) {
    g.eor_scorer = zero_scorer_like(model.eor_scorer);
  }
  return g;
}

TermRankingModel init_model(const ModelConfig& config, std::uint64_t seed,
                            const Vocabulary& vocab) {
  TermRankingModel m;
  m.config = config;
  m.config.vocab_rows = vocab.row_count();
  m.vocab_hash = vocab.content_hash();
  m.seed = seed;

  const std::size_t rows = m.config.vocab_rows;
  const std::size_t e = m.config.embedding_dim;
  const std::size_t h = m.config.hidden;
  const std::size_t in = m.config.input_dim();

  std::mt19937_64 rng(seed);
  m.embeddings.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(e));
  glorot_fill(m.embeddings.data(), static_cast<std::size_t>(m.embeddings.size()), rows, e, rng);

  auto init_scorer = [&](ScorerParams& p) {
    p.w1.resize(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(in));
    glorot_fill(p.w1.data(), static_cast<std::size_t>(p.w1.size()), in, h, rng);
    p.b1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h));
    p.w2.resize(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(h));
    glorot_fill(p.w2.data(), static_cast<std::size_t>(p.w2.size()), h, h, rng);
    p.b2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h));
    p.w3.resize(static_cast<Eigen::Index>(h));
    glorot_fill(p.w3.data(), static_cast<std::size_t>(p.w3.size()), h, 1, rng);
    p.b3 = 0.0;
  };
  init_scorer(m.term_scorer);
  if (m.config.kind == ModelKind::listwise) init_scorer(m.eor_scorer);
  return m;
}

TermDistribution forward(const TermRankingModel& model, const MessageFeatures& features,
                         bool train_mode, std::mt19937_64* rng) {
  if (model.config.kind != ModelKind::listwise) {
    throw ExecutionError("listwise forward pass on a pointwise model");
  }
  const std::size_t n = features.tokens.size();
  if (n == 0) throw ValidationError("empty message " + features.message_id);
  if (train_mode && rng == nullptr) throw ExecutionError("train-mode forward needs an rng");

  const Eigen::MatrixXd x = build_input_matrix(model, features);
  const bool drop = train_mode && model.config.dropout_p > 0.0;
  const ScorerCache cg =
      scorer_forward(model.term_scorer, x.transpose(), drop, model.config.dropout_p, rng);
  const Eigen::MatrixXd xh = x.colwise().mean().transpose();
  const ScorerCache ch =
      scorer_forward(model.eor_scorer, xh, drop, model.config.dropout_p, rng);

  TermDistribution dist;
  dist.raw_scores.assign(cg.s.data(), cg.s.data() + n);
  dist.raw_scores.push_back(ch.s(0));

  const double m = *std::max_element(dist.raw_scores.begin(), dist.raw_scores.end());
  double sum = 0.0;
  for (const double s : dist.raw_scores) sum += std::exp(s - m);
  const double lse = m + std::log(sum);
  dist.probabilities.reserve(n + 1);
  for (const double s : dist.raw_scores) dist.probabilities.push_back(std::exp(s - lse));
  return dist;
}

std::vector<double> forward_pointwise(const TermRankingModel& model,
                                      const MessageFeatures& features, bool train_mode,
                                      std::mt19937_64* rng) {
  if (model.config.kind != ModelKind::pointwise) {
    throw ExecutionError("pointwise forward pass on a listwise model");
  }
  const std::size_t n = features.tokens.size();
  if (n == 0) throw ValidationError("empty message " + features.message_id);
  if (train_mode && rng == nullptr) throw ExecutionError("train-mode forward needs an rng");

  const Eigen::MatrixXd x = build_input_matrix(model, features);
  const bool drop = train_mode && model.config.dropout_p > 0.0;
  const ScorerCache cg =
      scorer_forward(model.term_scorer, x.transpose(), drop, model.config.dropout_p, rng);
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = sigmoid(cg.s(static_cast<Eigen::Index>(k)));
  return out;
}

std::vector<double> target_distribution(const MessageFeatures& features,
                                        const std::vector<std::string>& silver_terms,
                                        double alpha_eor) {
  if (!(alpha_eor >= 0.0 && alpha_eor <= 1.0)) {
    throw ValidationError("end-of-ranking mass must lie in [0, 1]");
  }
  if (silver_terms.empty()) throw ValidationError("empty silver query");
  const std::unordered_set<std::string> wanted = silver_set_checked(features, silver_terms);

  std::map<std::string, std::size_t> counts;
  for (const std::string& t : features.tokens) ++counts[t];

  const std::size_t n = features.tokens.size();
  const double q_size = static_cast<double>(wanted.size());
  std::vector<double> q(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::string& t = features.tokens[k];
    if (wanted.count(t)) {
      q[k] = alpha_eor / (static_cast<double>(counts[t]) * q_size);
    }
  }
  q[n] = 1.0 - alpha_eor;
  return q;
}

LossResult compute_loss(const TermRankingModel& model, const std::vector<TrainingPair>& batch,
                        const std::vector<MessageFeatures>& pool, const TrainingConfig& config,
                        const LossOptions& options, std::mt19937_64* rng) {
  if (batch.empty()) throw ValidationError("empty batch");
  if (options.dropout && rng == nullptr) throw ExecutionError("dropout needs an rng");

  LossResult result;
  if (options.gradients) result.grads = make_gradients(model);

  const bool listwise = model.config.kind == ModelKind::listwise;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  for (const TrainingPair& pair : batch) {
    if (pair.features_index >= pool.size()) {
      throw ExecutionError("features index out of range for pair " + pair.id);
    }
    const MessageFeatures& features = pool[pair.features_index];
    const std::size_t n = features.tokens.size();
    if (n == 0) throw ValidationError("empty message " + features.message_id);
    const std::unordered_set<std::string> wanted = silver_set_checked(features, pair.terms);

    const Eigen::MatrixXd x = build_input_matrix(model, features);
    const bool drop = options.dropout && model.config.dropout_p > 0.0;
    const ScorerCache cg =
        scorer_forward(model.term_scorer, x.transpose(), drop, model.config.dropout_p, rng);

    double pair_loss = 0.0;
    const double c = pair.weight * inv_batch;

    if (listwise) {
      const Eigen::MatrixXd xh = x.colwise().mean().transpose();
      const ScorerCache ch =
          scorer_forward(model.eor_scorer, xh, drop, model.config.dropout_p, rng);
      const double sh = ch.s(0);

      const std::vector<double> q = target_distribution(features, pair.terms, config.alpha_eor);

      double mx = sh;
      for (std::size_t k = 0; k < n; ++k) {
        mx = std::max(mx, cg.s(static_cast<Eigen::Index>(k)));
      }
      double sum = std::exp(sh - mx);
      for (std::size_t k = 0; k < n; ++k) {
        sum += std::exp(cg.s(static_cast<Eigen::Index>(k)) - mx);
      }
      const double lse = mx + std::log(sum);

      double xent = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (q[k] > 0.0) xent -= q[k] * (cg.s(static_cast<Eigen::Index>(k)) - lse);
      }
      if (q[n] > 0.0) xent -= q[n] * (sh - lse);

      // Lowest-scored silver occurrence; first position on ties.
      std::size_t k_min = n;
      double g_min = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k) {
        if (!wanted.count(features.tokens[k])) continue;
        const double s = cg.s(static_cast<Eigen::Index>(k));
        if (s < g_min) {
          g_min = s;
          k_min = k;
        }
      }
      const double diff = g_min - sh;
      pair_loss = xent + diff * diff;

      if (options.gradients) {
        Eigen::VectorXd ds(static_cast<Eigen::Index>(n));
        for (std::size_t k = 0; k < n; ++k) {
          const double s = cg.s(static_cast<Eigen::Index>(k));
          ds(static_cast<Eigen::Index>(k)) = std::exp(s - lse) - q[k];
        }
        double ds_h = std::exp(sh - lse) - q[n];
        ds(static_cast<Eigen::Index>(k_min)) += 2.0 * diff;
        ds_h -= 2.0 * diff;
        ds *= c;
        ds_h *= c;

        Eigen::MatrixXd dxt = scorer_backward(model.term_scorer, cg, ds, result.grads.term_scorer);
        Eigen::VectorXd ds_h_vec(1);
        ds_h_vec(0) = ds_h;
        const Eigen::MatrixXd dxh =
            scorer_backward(model.eor_scorer, ch, ds_h_vec, result.grads.eor_scorer);
        dxt.colwise() += dxh.col(0) / static_cast<double>(n);
        accumulate_embedding_grads(model, features, dxt, result.grads);
      }
    } else {
      Eigen::VectorXd ds(static_cast<Eigen::Index>(n));
      for (std::size_t k = 0; k < n; ++k) {
        const double s = cg.s(static_cast<Eigen::Index>(k));
        const double y = wanted.count(features.tokens[k]) ? 1.0 : 0.0;
        pair_loss += stable_bce(s, y);
        ds(static_cast<Eigen::Index>(k)) = (sigmoid(s) - y) * c;
      }
      if (options.gradients) {
        const Eigen::MatrixXd dxt =
            scorer_backward(model.term_scorer, cg, ds, result.grads.term_scorer);
        accumulate_embedding_grads(model, features, dxt, result.grads);
      }
    }

    if (!std::isfinite(pair_loss)) {
      throw ExecutionError("non-finite loss for pair " + pair.id);
    }
    result.data_loss += c * pair_loss;
  }

  result.loss = result.data_loss;
  if (options.regularize) {
    const double coeff = config.reg_coefficient();
    double sq = model.embeddings.squaredNorm() + model.term_scorer.w1.squaredNorm() +
                model.term_scorer.w2.squaredNorm() + model.term_scorer.w3.squaredNorm();
    if (listwise) {
      sq += model.eor_scorer.w1.squaredNorm() + model.eor_scorer.w2.squaredNorm() +
            model.eor_scorer.w3.squaredNorm();
    }
    result.loss += coeff * sq;
    if (options.gradients) {
      result.grads.embeddings += 2.0 * coeff * model.embeddings;
      auto add = [coeff](const ScorerParams& p, ScorerParams& g) {
        g.w1 += 2.0 * coeff * p.w1;
        g.w2 += 2.0 * coeff * p.w2;
        g.w3 += 2.0 * coeff * p.w3;
      };
      add(model.term_scorer, result.grads.term_scorer);
      if (listwise) add(model.eor_scorer, result.grads.eor_scorer);
    }
  }
  return result;
}

TermRankingModel train_model(const std::vector<TrainingPair>& train_pairs,
                             const std::vector<TrainingPair>& validation_pairs,
                             const std::vector<MessageFeatures>& pool, const ModelConfig& mconfig,
                             const TrainingConfig& tconfig, const Vocabulary& vocab) {
  if (train_pairs.empty()) throw ValidationError("empty training set");
  if (validation_pairs.empty()) throw ValidationError("empty validation set");
  tconfig.validate();

  TermRankingModel model = init_model(mconfig, tconfig.seed, vocab);

  std::vector<TensorView> params = parameter_tensors(model);
  std::vector<Eigen::VectorXd> adam_m, adam_v;
  for (const TensorView& t : params) {
    adam_m.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(t.size)));
    adam_v.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(t.size)));
  }

  std::mt19937_64 rng(derive_seed(tconfig.seed, "train-loop"));
  const LossOptions train_opts{/*dropout=*/true, /*regularize=*/true, /*gradients=*/true};
  const LossOptions val_opts{/*dropout=*/false, /*regularize=*/false, /*gradients=*/false};

  TermRankingModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::vector<double> val_losses;
  std::size_t step = 0;

  std::vector<std::size_t> order(train_pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= tconfig.epochs; ++epoch) {
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, order.size() - i));
      std::swap(order[i], order[j]);
    }
    for (std::size_t start = 0; start < order.size(); start += tconfig.batch_size) {
      const std::size_t end = std::min(start + tconfig.batch_size, order.size());
      std::vector<TrainingPair> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_pairs[order[i]]);

      LossResult lr = compute_loss(model, batch, pool, tconfig, train_opts, &rng);
      std::vector<TensorView> grads = gradient_tensors(lr.grads, model.config.kind);

      ++step;
      const double bc1 = 1.0 - std::pow(tconfig.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(tconfig.adam_beta2, static_cast<double>(step));
      for (std::size_t t = 0; t < params.size(); ++t) {
        Eigen::Map<Eigen::VectorXd> theta(params[t].data,
                                          static_cast<Eigen::Index>(params[t].size));
        Eigen::Map<const Eigen::VectorXd> g(grads[t].data,
                                            static_cast<Eigen::Index>(grads[t].size));
        adam_m[t] = tconfig.adam_beta1 * adam_m[t] + (1.0 - tconfig.adam_beta1) * g;
        adam_v[t] = tconfig.adam_beta2 * adam_v[t] +
                    (1.0 - tconfig.adam_beta2) * g.cwiseProduct(g);
        theta.array() -= tconfig.adam_alpha * (adam_m[t].array() / bc1) /
                         ((adam_v[t].array() / bc2).sqrt() + tconfig.adam_eps);
      }
    }

    const double val =
        compute_loss(model, validation_pairs, pool, tconfig, val_opts, nullptr).data_loss;
    val_losses.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_epoch = epoch;
      best = model;
    }
  }

  best.seed = tconfig.seed;
  best.chosen_epoch = best_epoch;
  best.validation_losses = val_losses;

  if (best.config.kind == ModelKind::pointwise) {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (const TrainingPair& pair : validation_pairs) {
      const MessageFeatures& features = pool[pair.features_index];
      const std::unordered_set<std::string> wanted = silver_set_checked(features, pair.terms);
      const std::vector<double> s = forward_pointwise(best, features);
      for (std::size_t k = 0; k < s.size(); ++k) {
        scores.push_back(s[k]);
        labels.push_back(wanted.count(features.tokens[k]) ? 1 : 0);
      }
    }
    best.threshold = sweep_threshold(scores, labels).threshold;
  }
  return best;
}

std::vector<std::string> select_query_terms(const std::vector<double>& term_scores,
                                            double eor_score,
                                            const std::vector<std::string>& tokens) {
  if (term_scores.size() != tokens.size()) {
    throw ExecutionError("score/token length mismatch");
  }
  const std::size_t n = tokens.size();
  std::vector<std::size_t> order(n + 1);  // index n is the end-of-ranking entry
  for (std::size_t i = 0; i <= n; ++i) order[i] = i;
  auto score_of = [&](std::size_t i) { return i == n ? eor_score : term_scores[i]; };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = score_of(a), sb = score_of(b);
    if (sa != sb) return sa > sb;
    return a < b;
  });
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const std::size_t i : order) {
    if (i == n) break;
    if (seen.insert(tokens[i]).second) out.push_back(tokens[i]);
  }
  return out;
}

std::vector<std::string> formulate_query_cnn(const TermRankingModel& model,
                                             const MessageFeatures& features) {
  TermDistribution dist = forward(model, features);
  const std::size_t n = features.tokens.size();
  const double eor = dist.raw_scores[n];
  dist.raw_scores.pop_back();
  return select_query_terms(dist.raw_scores, eor, features.tokens);
}

ThresholdSweep sweep_threshold(const std::vector<double>& scores,
                               const std::vector<std::uint8_t>& labels) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw ValidationError("threshold sweep needs matching non-empty scores and labels");
  }
  std::vector<double> candidates(scores);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  candidates.insert(candidates.begin(), candidates.front() - 1.0);

  ThresholdSweep best;
  best.f1 = -1.0;
  for (const double tau : candidates) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool pred = scores[i] > tau;
      if (pred && labels[i]) ++tp;
      else if (pred && !labels[i]) ++fp;
      else if (!pred && labels[i]) ++fn;
    }
    const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
    const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
    const double f1 =
        precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    if (f1 > best.f1 || (f1 == best.f1 && tau > best.threshold)) {
      best.f1 = f1;
      best.threshold = tau;
    }
  }
  return best;
}

std::vector<std::string> formulate_query_pointwise(const TermRankingModel& model,
                                                   const MessageFeatures& features,
                                                   double threshold) {
  const std::vector<double> scores = forward_pointwise(model, features);
  struct Best {
    double score = -std::numeric_limits<double>::infinity();
    std::size_t first = 0;
  };
  std::map<std::string, Best> by_term;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    auto [it, inserted] = by_term.try_emplace(features.tokens[k]);
    if (inserted) it->second.first = k;
    if (scores[k] > it->second.score) it->second.score = scores[k];
  }
  std::vector<std::pair<std::string, Best>> kept;
  for (const auto& [term, b] : by_term) {
    if (b.score > threshold) kept.push_back({term, b});
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second.score != b.second.score) return a.second.score > b.second.score;
    return a.second.first < b.second.first;
  });
  std::vector<std::string> out;
  out.reserve(kept.size());
  for (auto& [term, b] : kept) out.push_back(std::move(term));
  return out;
}

std::vector<std::string> formulate_query_pointwise(const TermRankingModel& model,
                                                   const MessageFeatures& features) {
  if (std::isnan(model.threshold)) {
    throw ExecutionError("pointwise model has no decision threshold");
  }
  return formulate_query_pointwise(model, features, model.threshold);
}

void save_model(const TermRankingModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExecutionError("cannot write model checkpoint: " + path);
  BinaryWriter w(out);
  w.magic("ARNM", 1);
  w.u8(static_cast<std::uint8_t>(model.config.kind));
  w.u64(model.config.context_width);
  w.u64(model.config.embedding_dim);
  w.u64(model.config.hidden);
  w.f64(model.config.dropout_p);
  w.u64(model.config.vocab_rows);
  w.u8(model.config.mask.term ? 1 : 0);
  w.u8(model.config.mask.context ? 1 : 0);
  for (const bool b : model.config.mask.aux) w.u8(b ? 1 : 0);
  w.u64(model.vocab_hash);

  auto& mutable_model = const_cast<TermRankingModel&>(model);  // read-only enumeration
  const std::vector<TensorView> tensors = parameter_tensors(mutable_model);
  w.u64(tensors.size());
  for (const TensorView& t : tensors) {
    w.str(t.name);
    w.u64(t.size);
    for (std::size_t i = 0; i < t.size; ++i) w.f64(t.data[i]);
  }

  w.u64(model.seed);
  w.u64(model.chosen_epoch);
  w.f64_vec(model.validation_losses);
  w.f64(model.threshold);
  out.flush();
  if (!out) throw ExecutionError("failed writing model checkpoint: " + path);
}

TermRankingModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open model checkpoint: " + path);
  BinaryReader r(in);
  r.magic("ARNM", 1);
  TermRankingModel model;
  model.config.kind = static_cast<ModelKind>(r.u8());
  if (model.config.kind != ModelKind::listwise && model.config.kind != ModelKind::pointwise) {
    throw ValidationError("unknown model kind in " + path);
  }
  model.config.context_width = r.u64();
  model.config.embedding_dim = r.u64();
  model.config.hidden = r.u64();
  model.config.dropout_p = r.f64();
  model.config.vocab_rows = r.u64();
  model.config.mask.term = r.u8() != 0;
  model.config.mask.context = r.u8() != 0;
  for (bool& b : model.config.mask.aux) b = r.u8() != 0;
  model.vocab_hash = r.u64();

  const std::size_t rows = model.config.vocab_rows;
  const std::size_t e = model.config.embedding_dim;
  const std::size_t h = model.config.hidden;
  const std::size_t in_dim = model.config.input_dim();
  if (rows < 2 || e == 0 || h == 0) throw ValidationError("corrupt model dimensions in " + path);
  model.embeddings = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                           static_cast<Eigen::Index>(e));
  auto alloc_scorer = [&](ScorerParams& p) {
    p.w1 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(in_dim));
    p.b1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h));
    p.w2 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(h));
    p.b2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h));
    p.w3 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h));
    p.b3 = 0.0;
  };
  alloc_scorer(model.term_scorer);
  if (model.config.kind == ModelKind::listwise) alloc_scorer(model.eor_scorer);

  const std::vector<TensorView> tensors = parameter_tensors(model);
  const std::size_t count = r.u64();
  if (count != tensors.size()) throw ValidationError("unexpected tensor count in " + path);
  for (const TensorView& t : tensors) {
    const std::string name = r.str();
    const std::size_t size = r.u64();
    if (name != t.name || size != t.size) {
      throw ValidationError("unexpected tensor layout in " + path + ": " + name);
    }
    for (std::size_t i = 0; i < t.size; ++i) t.data[i] = r.f64();
  }

  model.seed = r.u64();
  model.chosen_epoch = r.u64();
  model.validation_losses = r.f64_vec();
  model.threshold = r.f64();
  return model;
}

}  // namespace attachrec

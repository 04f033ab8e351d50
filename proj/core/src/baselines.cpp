#include "attachrec/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "attachrec/errors.hpp"

namespace attachrec {

namespace {

struct TermStat {
  std::string term;
  std::size_t tf = 0;
};

std::vector<TermStat> unique_terms(const std::vector<std::string>& tokens) {
  std::map<std::string, std::size_t> counts;
  for (const std::string& t : tokens) ++counts[t];
  std::vector<TermStat> out;
  out.reserve(counts.size());
  for (const auto& [term, tf] : counts) out.push_back({term, tf});
  return out;  // lexicographic by construction
}

std::vector<std::string> top_k_by_score(const std::vector<TermStat>& terms,
                                        const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> order(terms.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return terms[a].term < terms[b].term;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < order.size() && out.size() < k; ++i) {
    out.push_back(terms[order[i]].term);
  }
  return out;
}

std::vector<std::string> random_subset(std::vector<TermStat> terms, std::size_t k,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = terms.size();
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
    std::swap(terms[i], terms[j]);
  }
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(std::move(terms[i].term));
  return out;
}

}  // namespace

std::string method_name(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::full: return "full";
    case BaselineMethod::tf: return "tf";
    case BaselineMethod::tfidf: return "tfidf";
    case BaselineMethod::logtfidf: return "logtfidf";
    case BaselineMethod::relative_entropy: return "re";
    case BaselineMethod::random_k: return "random_k";
    case BaselineMethod::random_pct: return "random_pct";
  }
  throw ExecutionError("unknown baseline method");
}

std::string field_name(QueryField field) {
  switch (field) {
    case QueryField::subject: return "subject";
    case QueryField::body: return "body";
    case QueryField::subject_body: return "subject_body";
  }
  throw ExecutionError("unknown query field");
}

std::string config_name(const BaselineConfig& config) {
  std::ostringstream os;
  os << method_name(config.method) << '(' << field_name(config.field);
  switch (config.method) {
    case BaselineMethod::full: break;
    case BaselineMethod::tf:
    case BaselineMethod::tfidf:
    case BaselineMethod::logtfidf:
    case BaselineMethod::random_k: os << ", k=" << config.k; break;
    case BaselineMethod::relative_entropy:
      os << ", k=" << config.k << ", lambda=";
      os << config.lambda;
      break;
    case BaselineMethod::random_pct: os << ", p=" << config.percent; break;
  }
  os << ')';
  return os.str();
}

BaselineConfig parse_config_name(const std::string& name) {
  const std::size_t open = name.find('(');
  if (open == std::string::npos || name.empty() || name.back() != ')') {
    throw ValidationError("unparsable baseline name: " + name);
  }
  const std::string method = name.substr(0, open);
  BaselineConfig config;
  if (method == "full") config.method = BaselineMethod::full;
  else if (method == "tf") config.method = BaselineMethod::tf;
  else if (method == "tfidf") config.method = BaselineMethod::tfidf;
  else if (method == "logtfidf") config.method = BaselineMethod::logtfidf;
  else if (method == "re") config.method = BaselineMethod::relative_entropy;
  else if (method == "random_k") config.method = BaselineMethod::random_k;
  else if (method == "random_pct") config.method = BaselineMethod::random_pct;
  else throw ValidationError("unknown baseline method in: " + name);

  std::vector<std::string> args;
  std::string inner = name.substr(open + 1, name.size() - open - 2);
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = inner.find(',', pos);
    std::string piece = inner.substr(pos, comma == std::string::npos ? comma : comma - pos);
    while (!piece.empty() && piece.front() == ' ') piece.erase(piece.begin());
    while (!piece.empty() && piece.back() == ' ') piece.pop_back();
    args.push_back(piece);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (args.empty() || args[0].empty()) {
    throw ValidationError("baseline name missing field: " + name);
  }
  if (args[0] == "subject") config.field = QueryField::subject;
  else if (args[0] == "body") config.field = QueryField::body;
  else if (args[0] == "subject_body") config.field = QueryField::subject_body;
  else throw ValidationError("unknown query field in: " + name);

  bool have_k = false, have_lambda = false, have_p = false;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::size_t eq = args[i].find('=');
    if (eq == std::string::npos) throw ValidationError("unparsable baseline argument in: " + name);
    const std::string key = args[i].substr(0, eq);
    const std::string value = args[i].substr(eq + 1);
    try {
      if (key == "k") {
        config.k = static_cast<std::size_t>(std::stoull(value));
        have_k = true;
      } else if (key == "lambda") {
        config.lambda = std::stod(value);
        have_lambda = true;
      } else if (key == "p") {
        config.percent = static_cast<unsigned>(std::stoul(value));
        have_p = true;
      } else {
        throw ValidationError("unknown baseline argument '" + key + "' in: " + name);
      }
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ValidationError("unparsable baseline argument value in: " + name);
    }
  }

  const bool needs_k = config.method == BaselineMethod::tf || config.method == BaselineMethod::tfidf ||
                       config.method == BaselineMethod::logtfidf ||
                       config.method == BaselineMethod::random_k ||
                       config.method == BaselineMethod::relative_entropy;
  if (needs_k && !have_k) throw ValidationError("baseline name missing k: " + name);
  if (config.method == BaselineMethod::relative_entropy && !have_lambda) {
    throw ValidationError("baseline name missing lambda: " + name);
  }
  if (config.method == BaselineMethod::random_pct && !have_p) {
    throw ValidationError("baseline name missing p: " + name);
  }
  return config;
}

std::vector<std::string> field_tokens(const Message& message, QueryField field) {
  switch (field) {
    case QueryField::subject: return message.subject_tokens;
    case QueryField::body: return message.body_tokens;
    case QueryField::subject_body: {
      std::vector<std::string> out = message.subject_tokens;
      out.insert(out.end(), message.body_tokens.begin(), message.body_tokens.end());
      return out;
    }
  }
  throw ExecutionError("unknown query field");
}

std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw ExecutionError("uniform_index over empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              (std::numeric_limits<std::uint64_t>::max() % n + 1) % n;
  std::uint64_t x = rng();
  while (x > limit) x = rng();
  return x % n;
}

std::vector<std::string> formulate_query_baseline(const BaselineConfig& config,
                                                  const Message& request,
                                                  const MailboxIndex& index, std::uint64_t seed) {
  const std::vector<std::string> tokens = field_tokens(request, config.field);
  std::vector<TermStat> terms = unique_terms(tokens);

  switch (config.method) {
    case BaselineMethod::full: {
      std::vector<std::string> out;
      out.reserve(terms.size());
      for (const TermStat& t : terms) out.push_back(t.term);
      return out;
    }
    case BaselineMethod::tf: {
      std::vector<double> scores;
      scores.reserve(terms.size());
      for (const TermStat& t : terms) scores.push_back(static_cast<double>(t.tf));
      return top_k_by_score(terms, scores, config.k);
    }
    case BaselineMethod::tfidf:
    case BaselineMethod::logtfidf: {
      const double n_docs = static_cast<double>(index.docs.size());
      std::vector<TermStat> known;
      std::vector<double> scores;
      for (const TermStat& t : terms) {
        const std::size_t df = index.df(t.term);
        if (df == 0) continue;
        const double idf = std::log(n_docs / static_cast<double>(df));
        const double tfv = config.method == BaselineMethod::tfidf
                               ? static_cast<double>(t.tf)
                               : std::log1p(static_cast<double>(t.tf));
        known.push_back(t);
        scores.push_back(tfv * idf);
      }
      return top_k_by_score(known, scores, config.k);
    }
    case BaselineMethod::relative_entropy: {
      const double field_len = static_cast<double>(tokens.size());
      std::vector<TermStat> known;
      std::vector<double> scores;
      for (const TermStat& t : terms) {
        const double p_c = index.collection_prob(t.term);
        if (p_c <= 0.0) continue;
        const double rel_tf = static_cast<double>(t.tf) / field_len;
        const double p_l = config.lambda * rel_tf + (1.0 - config.lambda) * p_c;
        known.push_back(t);
        scores.push_back(p_l * std::log(p_l / p_c));
      }
      return top_k_by_score(known, scores, config.k);
    }
    case BaselineMethod::random_k: return random_subset(std::move(terms), config.k, seed);
    case BaselineMethod::random_pct: {
      const std::size_t n = terms.size();
      const std::size_t k = static_cast<std::size_t>(
          std::ceil(static_cast<double>(config.percent) / 100.0 * static_cast<double>(n)));
      return random_subset(std::move(terms), k, seed);
    }
  }
  throw ExecutionError("unknown baseline method");
}

std::vector<BaselineConfig> baseline_grid() {
  std::vector<BaselineConfig> out;
  const QueryField fields[] = {QueryField::subject, QueryField::body, QueryField::subject_body};
  for (const QueryField field : fields) {
    out.push_back({BaselineMethod::full, field, 0, 0, 0.0});
  }
  for (const BaselineMethod method :
       {BaselineMethod::tf, BaselineMethod::tfidf, BaselineMethod::logtfidf,
        BaselineMethod::random_k}) {
    for (const QueryField field : fields) {
      for (std::size_t k = 1; k <= 15; ++k) out.push_back({method, field, k, 0, 0.0});
    }
  }
  for (const QueryField field : fields) {
    for (std::size_t k = 1; k <= 15; ++k) {
      for (int l = 1; l <= 9; ++l) {
        out.push_back({BaselineMethod::relative_entropy, field, k, 0,
                       static_cast<double>(l) / 10.0});
      }
    }
  }
  for (const QueryField field : fields) {
    for (const unsigned p : {10u, 20u, 30u, 40u, 50u}) {
      out.push_back({BaselineMethod::random_pct, field, 0, p, 0.0});
    }
  }
  return out;
}

}  // namespace attachrec

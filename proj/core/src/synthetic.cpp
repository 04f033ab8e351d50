#include "attachrec/synthetic.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "attachrec/baselines.hpp"
#include "attachrec/errors.hpp"
#include "attachrec/tokenize.hpp"

namespace attachrec {

namespace {

// Pronounceable three-syllable words over disjoint consonant inventories:
// corpus vocabulary uses one set, personal names another, so no display-name
// token ever collides with a vocabulary term.
constexpr const char kVocabConsonants[] = "bdfgklmnprst";  // 12
constexpr const char kNameConsonants[] = "vwzj";           // 4
constexpr const char kVowels[] = "aeiou";                  // 5

std::string syllable_word(const char* consonants, std::size_t n_consonants,
                          std::size_t value) {
  const std::size_t base = n_consonants * 5;
  std::string word;
  for (int s = 0; s < 3; ++s) {
    const std::size_t digit = value % base;
    value /= base;
    word.push_back(consonants[digit / 5]);
    word.push_back(kVowels[digit % 5]);
  }
  return word;
}

std::string vocab_word(std::size_t index) {
  // 60^3 = 216000 possible words; multiply by a unit to spread neighbors.
  return syllable_word(kVocabConsonants, 12, (index * 77777) % 216000);
}

std::string name_word(std::size_t index) {
  return syllable_word(kNameConsonants, 4, (index * 77) % 8000);
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::string join(const std::vector<std::string>& tokens) {
  std::ostringstream os;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) os << ' ';
    os << tokens[i];
  }
  return os.str();
}

struct Builder {
  const SyntheticSpec& spec;
  std::mt19937_64 rng;
  std::vector<std::string> vocab;
  std::size_t filler_begin = 0;  // vocabulary index where filler words start
  std::vector<std::string> addresses;
  std::vector<std::string> display_names;
  Corpus corpus;
  std::int64_t ts = 1'000'000;
  std::size_t counter = 0;

  Builder(const SyntheticSpec& s, std::uint64_t seed) : spec(s), rng(seed) {
    vocab = synthetic_vocabulary(spec.vocab_size);
    filler_begin = spec.signal_items * spec.signature_terms_per_item;
    for (std::size_t u = 0; u < spec.users; ++u) {
      const std::string base = name_word(u);
      addresses.push_back(base + "@example.test");
      std::string display = base;
      display[0] = static_cast<char>(display[0] - 'a' + 'A');
      display_names.push_back(display + " " + name_word(u + 101));
    }
  }

  std::string filler() {
    // Squared uniform skews the draw toward low indexes, giving the filler
    // pool a long-tailed frequency profile.
    const std::size_t pool = vocab.size() - filler_begin;
    const double u = uniform01(rng);
    return vocab[filler_begin + static_cast<std::size_t>(u * u * static_cast<double>(pool))];
  }

  std::size_t user() { return static_cast<std::size_t>(uniform_index(rng, addresses.size())); }

  std::size_t other_user(std::size_t not_this) {
    std::size_t u = user();
    while (u == not_this) u = user();
    return u;
  }

  void shuffle(std::vector<std::string>& v) {
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, v.size() - i));
      std::swap(v[i], v[j]);
    }
  }

  Message& add_message(const std::string& thread_id, std::size_t from, std::size_t to,
                       const std::vector<std::string>& subject_tokens,
                       const std::vector<std::string>& body_tokens) {
    Message m;
    std::ostringstream id;
    id << "m" << counter++;
    m.message_id = id.str();
    m.thread_id = thread_id;
    m.timestamp = ts;
    ts += 60;
    m.sender = addresses[from];
    m.recipients = {addresses[to]};
    m.sender_name = display_names[from];
    m.recipient_names = {display_names[to]};
    m.subject = join(subject_tokens);
    m.body = join(body_tokens);
    corpus.messages.push_back(std::move(m));
    return corpus.messages.back();
  }
};

}  // namespace

void SyntheticSpec::validate() const {
  if (users < 2) throw ValidationError("synthetic corpus needs at least two users");
  if (signature_terms_per_item == 0) {
    throw ValidationError("each item needs at least one signature term");
  }
  const std::size_t signatures = signal_items * signature_terms_per_item;
  if (vocab_size < signatures + 20) {
    throw ValidationError("vocabulary too small for the requested signatures");
  }
  if (signal_items > 0 && distractor_items >= signal_items) {
    throw ValidationError("distractor items must be fewer than signal items");
  }
  if (violation_pairs > signal_items) {
    throw ValidationError("violation pairs must not exceed signal items");
  }
  if (!(digit_token_rate >= 0.0 && digit_token_rate <= 1.0)) {
    throw ValidationError("digit token rate must lie in [0, 1]");
  }
}

std::vector<std::string> synthetic_vocabulary(std::size_t size) {
  if (size > 216000) throw ValidationError("vocabulary size exceeds the word space");
  std::vector<std::string> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) out.push_back(vocab_word(i));
  return out;
}

std::vector<std::string> signature_terms(const SyntheticSpec& spec, std::size_t item_index) {
  std::vector<std::string> out;
  for (std::size_t s = 0; s < spec.signature_terms_per_item; ++s) {
    out.push_back(vocab_word(item_index * spec.signature_terms_per_item + s));
  }
  return out;
}

std::string signal_item_id(const SyntheticSpec& spec, std::size_t item_index) {
  return vocab_word(item_index * spec.signature_terms_per_item) + ".pdf";
}

Corpus generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Builder b(spec, seed);

  // Announcements: every signal item reaches every mailbox before any request.
  for (std::size_t i = 0; i < spec.signal_items; ++i) {
    const std::vector<std::string> sig = signature_terms(spec, i);
    const std::size_t owner = i % spec.users;
    std::vector<std::string> subject = sig;
    subject.push_back(b.filler());
    std::vector<std::string> body = sig;
    for (int f = 0; f < 3; ++f) body.push_back(b.filler());
    Message& m = b.add_message("ann-" + std::to_string(i), owner,
                               (owner + 1) % spec.users, subject, body);
    m.recipients.clear();
    m.recipient_names.clear();
    for (std::size_t u = 0; u < spec.users; ++u) {
      if (u == owner) continue;
      m.recipients.push_back(b.addresses[u]);
      m.recipient_names.push_back(b.display_names[u]);
    }
    m.attachments.push_back({signal_item_id(spec, i), signal_item_id(spec, i)});
  }

  // Rare decoys: one lone carrier message each; trimmed as too infrequent.
  for (std::size_t d = 0; d < spec.rare_decoys; ++d) {
    const std::size_t from = b.user();
    std::vector<std::string> subject{b.filler(), b.filler()};
    std::vector<std::string> body{b.filler(), b.filler(), b.filler(), b.filler()};
    Message& m = b.add_message("rare-" + std::to_string(d), from, b.other_user(from),
                               subject, body);
    const std::string item = "rare-" + std::to_string(d) + ".pdf";
    m.attachments.push_back({item, item});
  }

  // Frequent decoys: many singleton carrier threads; trimmed as too frequent,
  // and minable only as history-free messages anyway.
  for (std::size_t d = 0; d < spec.frequent_decoys; ++d) {
    const std::string item = "deco-" + std::to_string(d) + ".pdf";
    for (std::size_t c = 0; c < spec.chatter_per_frequent_decoy; ++c) {
      const std::size_t from = b.user();
      std::vector<std::string> subject{b.filler(), b.filler()};
      std::vector<std::string> body{b.filler(), b.filler(), b.filler(), b.filler()};
      Message& m = b.add_message("chat-" + std::to_string(d) + "-" + std::to_string(c), from,
                                 b.other_user(from), subject, body);
      m.attachments.push_back({item, item});
    }
  }

  // Request/reply pairs, outer loop over rounds so every item also has early
  // pairs when the instance list is later split by time.
  for (std::size_t p = 0; p < spec.pairs_per_item; ++p) {
    for (std::size_t i = 0; i < spec.signal_items; ++i) {
      const std::vector<std::string> sig = signature_terms(spec, i);
      const std::size_t requester = b.user();
      const std::size_t replier = b.other_user(requester);
      const std::string thread =
          "t" + std::to_string(p) + "-" + std::to_string(i);

      std::vector<std::string> subject = sig;
      for (std::size_t f = 0; f < spec.subject_filler; ++f) subject.push_back(b.filler());
      b.shuffle(subject);

      std::vector<std::string> body = sig;
      std::vector<std::size_t> distractors;
      while (distractors.size() < spec.distractor_items) {
        const std::size_t d = static_cast<std::size_t>(uniform_index(b.rng, spec.signal_items));
        if (d == i) continue;
        if (std::find(distractors.begin(), distractors.end(), d) != distractors.end()) continue;
        distractors.push_back(d);
      }
      for (const std::size_t d : distractors) {
        for (const std::string& t : signature_terms(spec, d)) body.push_back(t);
      }
      for (std::size_t f = 0; f < spec.body_filler; ++f) body.push_back(b.filler());
      if (uniform01(b.rng) < spec.digit_token_rate) {
        body.push_back(std::to_string(2000 + uniform_index(b.rng, 100)));
      }
      b.shuffle(body);

      b.add_message(thread, requester, replier, subject, body);
      Message& reply = b.add_message(thread, replier, requester,
                                     {subject.front()}, {b.filler(), b.filler()});
      reply.attachments.push_back({signal_item_id(spec, i), signal_item_id(spec, i)});
    }
  }

  // Violation pairs: the request already carries the item, so the mined reply
  // candidate is dropped for lack of novel items. Distinct items keep the
  // extra frequency bumps from disturbing the trim boundaries.
  for (std::size_t v = 0; v < spec.violation_pairs; ++v) {
    const std::size_t i = v;  // distinct signal items
    const std::vector<std::string> sig = signature_terms(spec, i);
    const std::size_t requester = b.user();
    const std::size_t replier = b.other_user(requester);
    const std::string thread = "tv" + std::to_string(v);
    std::vector<std::string> subject = sig;
    subject.push_back(b.filler());
    Message& request = b.add_message(thread, requester, replier, subject,
                                     {sig.front(), b.filler(), b.filler()});
    request.attachments.push_back({signal_item_id(spec, i), signal_item_id(spec, i)});
    Message& reply = b.add_message(thread, replier, requester, {subject.front()},
                                   {b.filler(), b.filler()});
    reply.attachments.push_back({signal_item_id(spec, i), signal_item_id(spec, i)});
  }

  for (Message& m : b.corpus.messages) {
    m.subject_tokens = tokenize(m.subject);
    m.body_tokens = tokenize(m.body);
    m.items = extract_items(m);
  }
  b.corpus.rebuild_derived();
  return b.corpus;
}

}  // namespace attachrec

#include "attachrec/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "attachrec/binio.hpp"
#include "attachrec/errors.hpp"
#include "attachrec/tokenize.hpp"

namespace attachrec {

using json = nlohmann::ordered_json;

bool Message::carries(const std::string& item_id) const {
  for (const auto& ref : items)
    if (ref.item_id == item_id) return true;
  return false;
}

const Message& Corpus::message(const std::string& id) const {
  auto it = by_id.find(id);
  if (it == by_id.end()) throw ValidationError("unknown message_id: " + id);
  return messages[it->second];
}

void Corpus::rebuild_derived() {
  by_id.clear();
  threads.clear();
  mailboxes.clear();
  items.clear();
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const Message& m = messages[i];
    if (!by_id.emplace(m.message_id, i).second)
      throw ValidationError("duplicate message_id: " + m.message_id);
    threads[m.thread_id].push_back(i);
    mailboxes[m.sender].push_back(i);
    for (const auto& r : m.recipients)
      if (r != m.sender) mailboxes[r].push_back(i);
  }
  auto by_time = [this](std::size_t a, std::size_t b) {
    const Message& ma = messages[a];
    const Message& mb = messages[b];
    if (ma.timestamp != mb.timestamp) return ma.timestamp < mb.timestamp;
    return ma.message_id < mb.message_id;
  };
  for (auto& [id, v] : threads) std::sort(v.begin(), v.end(), by_time);
  for (auto& [user, v] : mailboxes) {
    std::sort(v.begin(), v.end(), by_time);
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  for (std::size_t i = 0; i < messages.size(); ++i) {
    for (const auto& ref : messages[i].items) {
      auto [it, fresh] = items.try_emplace(ref.item_id);
      if (fresh) {
        it->second.item_id = ref.item_id;
        it->second.kind = ref.kind;
      }
      it->second.carrier_messages.push_back(i);
    }
  }
  for (auto& [id, item] : items) {
    auto& v = item.carrier_messages;
    std::sort(v.begin(), v.end(), by_time);
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

std::optional<std::string> normalize_url(std::string_view url) {
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos || scheme_end == 0) return std::nullopt;
  std::string scheme = ascii_lower(url.substr(0, scheme_end));
  for (char c : scheme)
    if (!(c >= 'a' && c <= 'z')) return std::nullopt;
  std::string_view rest = url.substr(scheme_end + 3);
  const std::size_t authority_end = rest.find_first_of("/?#");
  std::string_view authority = rest.substr(0, authority_end == std::string_view::npos ? rest.size() : authority_end);
  if (authority.empty()) return std::nullopt;
  // Host lowercased; an explicit port is preserved as written.
  std::string host_port;
  const std::size_t colon = authority.rfind(':');
  if (colon != std::string_view::npos && colon + 1 < authority.size() &&
      authority.find_first_not_of("0123456789", colon + 1) == std::string_view::npos) {
    host_port = ascii_lower(authority.substr(0, colon)) + std::string(authority.substr(colon));
  } else {
    host_port = ascii_lower(authority);
  }

  std::string path, query;
  if (authority_end != std::string_view::npos) {
    std::string_view tail = rest.substr(authority_end);
    const std::size_t frag = tail.find('#');
    if (frag != std::string_view::npos) tail = tail.substr(0, frag);
    const std::size_t qmark = tail.find('?');
    if (qmark != std::string_view::npos) {
      path = std::string(tail.substr(0, qmark));
      std::string_view raw_query = tail.substr(qmark + 1);
      // Filter tracking parameters, preserve the remainder byte-exact.
      std::vector<std::string_view> kept;
      std::size_t pos = 0;
      while (pos <= raw_query.size()) {
        std::size_t amp = raw_query.find('&', pos);
        std::string_view param = raw_query.substr(pos, amp == std::string_view::npos ? std::string_view::npos : amp - pos);
        std::string_view key = param.substr(0, param.find('='));
        std::string key_lower = ascii_lower(key);
        if (!param.empty() && key_lower.rfind("utm_", 0) != 0) kept.push_back(param);
        if (amp == std::string_view::npos) break;
        pos = amp + 1;
      }
      for (std::size_t i = 0; i < kept.size(); ++i) {
        query += (i == 0 ? "?" : "&");
        query += std::string(kept[i]);
      }
    } else {
      path = std::string(tail);
    }
  }
  if (!path.empty() && path.back() == '/') path.pop_back();
  return scheme + "://" + host_port + path + query;
}

namespace {

// Candidate URLs are whitespace-delimited body chunks starting with http(s)://,
// with trailing sentence punctuation removed before normalization.
std::vector<std::string> find_body_urls(const std::string& body) {
  std::vector<std::string> found;
  std::size_t i = 0;
  const std::size_t n = body.size();
  while (i < n) {
    while (i < n && is_ascii_space(body[i])) ++i;
    std::size_t start = i;
    while (i < n && !is_ascii_space(body[i])) ++i;
    if (i == start) break;
    std::string token = body.substr(start, i - start);
    constexpr std::string_view lead = "(<['\"";
    std::size_t skip = 0;
    while (skip < token.size() && lead.find(token[skip]) != std::string_view::npos) ++skip;
    if (skip > 0) token.erase(0, skip);
    std::string lower = ascii_lower(token);
    if (lower.rfind("http://", 0) == 0 || lower.rfind("https://", 0) == 0) {
      constexpr std::string_view trail = ")>.,;:!?'\"]";
      std::size_t end = token.size();
      while (end > 0 && trail.find(token[end - 1]) != std::string_view::npos) --end;
      if (end > 0) found.push_back(token.substr(0, end));
    }
  }
  return found;
}

}  // namespace

std::vector<ItemRef> extract_items(const Message& message, std::vector<std::string>* warnings) {
  std::vector<ItemRef> refs;
  std::set<std::string> seen;
  for (const auto& att : message.attachments) {
    if (seen.insert(att.item_id).second) refs.push_back({att.item_id, ItemKind::attachment});
  }
  for (const auto& raw : find_body_urls(message.body)) {
    auto norm = normalize_url(raw);
    if (!norm) {
      if (warnings) warnings->push_back("message " + message.message_id + ": unparsable URL skipped: " + raw);
      continue;
    }
    if (seen.insert(*norm).second) refs.push_back({*norm, ItemKind::url});
  }
  return refs;
}

namespace {

Message message_from_json(const json& j, std::size_t line_no) {
  auto require = [&](const char* key) -> const json& {
    auto it = j.find(key);
    if (it == j.end())
      throw ValidationError("line " + std::to_string(line_no) + ": missing field '" + key + "'");
    return *it;
  };
  Message m;
  try {
    m.message_id = require("message_id").get<std::string>();
    m.thread_id = require("thread_id").get<std::string>();
    if (!require("timestamp").is_number_integer())
      throw ValidationError("line " + std::to_string(line_no) + ": timestamp must be an integer");
    m.timestamp = require("timestamp").get<std::int64_t>();
    m.sender = require("from").get<std::string>();
    m.recipients = require("to").get<std::vector<std::string>>();
    m.subject = require("subject").get<std::string>();
    m.body = require("body").get<std::string>();
    if (j.contains("from_name")) m.sender_name = j["from_name"].get<std::string>();
    if (j.contains("to_names")) m.recipient_names = j["to_names"].get<std::vector<std::string>>();
    if (j.contains("attachments")) {
      for (const auto& a : j["attachments"]) {
        Attachment att;
        if (!a.contains("item_id"))
          throw ValidationError("line " + std::to_string(line_no) + ": attachment missing item_id");
        att.item_id = a["item_id"].get<std::string>();
        if (a.contains("filename")) att.filename = a["filename"].get<std::string>();
        m.attachments.push_back(std::move(att));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
  }
  m.subject_tokens = tokenize(m.subject);
  m.body_tokens = tokenize(m.body);
  return m;
}

}  // namespace

ParseResult parse_corpus_jsonl(std::istream& in) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw ValidationError("line " + std::to_string(line_no) + ": expected a JSON object");
    Message m = message_from_json(j, line_no);
    std::vector<std::string> w;
    m.items = extract_items(m, &w);
    for (auto& s : w) result.warnings.push_back("line " + std::to_string(line_no) + ": " + s);
    result.corpus.messages.push_back(std::move(m));
  }
  result.corpus.rebuild_derived();
  return result;
}

ParseResult parse_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus file: " + path);
  return parse_corpus_jsonl(in);
}

void write_corpus_jsonl(const Corpus& corpus, std::ostream& out) {
  for (const Message& m : corpus.messages) {
    json j;
    j["message_id"] = m.message_id;
    j["thread_id"] = m.thread_id;
    j["timestamp"] = m.timestamp;
    j["from"] = m.sender;
    j["to"] = m.recipients;
    j["from_name"] = m.sender_name;
    j["to_names"] = m.recipient_names;
    j["subject"] = m.subject;
    j["body"] = m.body;
    json atts = json::array();
    for (const auto& a : m.attachments) atts.push_back({{"item_id", a.item_id}, {"filename", a.filename}});
    j["attachments"] = atts;
    out << j.dump() << "\n";
  }
}

std::set<std::string> trim_item_outliers(const Corpus& corpus) {
  std::set<std::string> retained;
  if (corpus.items.empty()) return retained;
  struct Entry {
    std::size_t freq;
    const std::string* id;
  };
  std::vector<Entry> entries;
  entries.reserve(corpus.items.size());
  for (const auto& [id, item] : corpus.items) entries.push_back({item.carrier_messages.size(), &id});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.freq != b.freq) return a.freq < b.freq;
    return *a.id < *b.id;
  });
  const std::size_t n = entries.size();
  const std::size_t cut = std::size_t(double(n) * 0.05);
  const std::size_t lo = entries[cut].freq;
  const std::size_t hi = entries[n - 1 - cut].freq;
  for (const Entry& e : entries)
    if (e.freq >= lo && e.freq <= hi) retained.insert(*e.id);
  return retained;
}

namespace {

bool earlier_in_thread(const Message& a, const Message& b) {
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  return a.message_id < b.message_id;
}

}  // namespace

MiningResult mine_instances(const Corpus& corpus, const std::set<std::string>& retained_items) {
  MiningResult result;
  for (std::size_t idx = 0; idx < corpus.messages.size(); ++idx) {
    const Message& reply = corpus.messages[idx];
    std::vector<std::string> carried;
    for (const auto& ref : reply.items)
      if (retained_items.count(ref.item_id)) carried.push_back(ref.item_id);
    if (carried.empty()) continue;
    result.drops.item_bearing_messages++;

    const auto& thread = corpus.threads.at(reply.thread_id);
    const Message* request = nullptr;
    for (std::size_t pos : thread) {
      const Message& cand = corpus.messages[pos];
      if (&cand == &reply) continue;
      if (!earlier_in_thread(cand, reply)) continue;
      if (!request || earlier_in_thread(*request, cand)) request = &cand;
    }
    if (!request) {
      result.drops.no_thread_history++;
      continue;
    }

    const auto mb_it = corpus.mailboxes.find(reply.sender);
    Instance inst;
    inst.request_id = request->message_id;
    inst.reply_id = reply.message_id;
    inst.replier = reply.sender;
    inst.t_prime = reply.timestamp;
    for (const std::string& item : carried) {
      bool seen_in_thread = false;
      for (std::size_t pos : thread) {
        const Message& prior = corpus.messages[pos];
        if (!earlier_in_thread(prior, reply)) continue;
        if (prior.carries(item)) {
          seen_in_thread = true;
          break;
        }
      }
      if (seen_in_thread) continue;
      bool in_mailbox_before_request = false;
      if (mb_it != corpus.mailboxes.end()) {
        for (std::size_t pos : mb_it->second) {
          const Message& m = corpus.messages[pos];
          if (m.timestamp >= request->timestamp) break;  // mailbox sorted by time
          if (m.carries(item)) {
            in_mailbox_before_request = true;
            break;
          }
        }
      }
      if (in_mailbox_before_request) inst.relevant_items.insert(item);
    }
    if (inst.relevant_items.empty()) {
      result.drops.all_items_filtered++;
      continue;
    }
    result.instances.push_back(std::move(inst));
  }
  std::sort(result.instances.begin(), result.instances.end(), [](const Instance& a, const Instance& b) {
    if (a.t_prime != b.t_prime) return a.t_prime < b.t_prime;
    return a.reply_id < b.reply_id;
  });
  return result;
}

std::vector<std::size_t> context(const Corpus& corpus, const std::string& message_id, std::int64_t t_prime) {
  const Message& m = corpus.message(message_id);
  std::vector<std::size_t> out;
  for (std::size_t pos : corpus.threads.at(m.thread_id))
    if (corpus.messages[pos].timestamp < t_prime) out.push_back(pos);
  return out;
}

std::vector<std::string> validate_instances(const Corpus& corpus,
                                            const std::set<std::string>& retained_items,
                                            const std::vector<Instance>& instances) {
  std::vector<std::string> violations;
  auto complain = [&](const Instance& inst, const std::string& what) {
    violations.push_back("instance " + inst.reply_id + ": " + what);
  };
  for (const Instance& inst : instances) {
    const Message& reply = corpus.message(inst.reply_id);
    const Message& request = corpus.message(inst.request_id);
    if (reply.thread_id != request.thread_id) complain(inst, "request and reply in different threads");
    if (!earlier_in_thread(request, reply)) complain(inst, "request does not precede reply");
    // Immediate predecessor check.
    for (std::size_t pos : corpus.threads.at(reply.thread_id)) {
      const Message& between = corpus.messages[pos];
      if (&between == &reply || &between == &request) continue;
      if (earlier_in_thread(request, between) && earlier_in_thread(between, reply))
        complain(inst, "request is not the immediately preceding thread message");
    }
    if (inst.replier != reply.sender) complain(inst, "replier is not the reply sender");
    if (inst.t_prime != reply.timestamp) complain(inst, "t_prime differs from reply timestamp");
    if (inst.relevant_items.empty()) complain(inst, "empty relevant item set");
    const auto mb_it = corpus.mailboxes.find(inst.replier);
    for (const std::string& item : inst.relevant_items) {
      if (!retained_items.count(item)) complain(inst, "relevant item not retained: " + item);
      if (!reply.carries(item)) complain(inst, "reply does not carry relevant item: " + item);
      for (std::size_t pos : corpus.threads.at(reply.thread_id)) {
        const Message& prior = corpus.messages[pos];
        if (earlier_in_thread(prior, reply) && prior.carries(item))
          complain(inst, "relevant item occurred earlier in thread: " + item);
      }
      bool available = false;
      if (mb_it != corpus.mailboxes.end())
        for (std::size_t pos : mb_it->second) {
          const Message& m = corpus.messages[pos];
          if (m.timestamp >= inst.t_prime) break;
          if (m.carries(item)) {
            available = true;
            break;
          }
        }
      if (!available) complain(inst, "relevant item absent from replier mailbox before t_prime: " + item);
    }
  }
  return violations;
}

namespace {

constexpr char kCorpusMagic[5] = "ARCP";
constexpr std::uint32_t kCorpusVersion = 1;

}  // namespace

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExecutionError("cannot write corpus snapshot: " + path);
  BinaryWriter w(out);
  w.magic(kCorpusMagic, kCorpusVersion);
  w.u64(corpus.messages.size());
  for (const Message& m : corpus.messages) {
    w.str(m.message_id);
    w.str(m.thread_id);
    w.i64(m.timestamp);
    w.str(m.sender);
    w.str_vec(m.recipients);
    w.str(m.sender_name);
    w.str_vec(m.recipient_names);
    w.str(m.subject);
    w.str(m.body);
    w.u64(m.attachments.size());
    for (const auto& a : m.attachments) {
      w.str(a.item_id);
      w.str(a.filename);
    }
    w.u64(m.items.size());
    for (const auto& ref : m.items) {
      w.str(ref.item_id);
      w.u8(std::uint8_t(ref.kind));
    }
  }
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open corpus snapshot: " + path);
  BinaryReader r(in);
  r.magic(kCorpusMagic, kCorpusVersion);
  Corpus corpus;
  const std::uint64_t n = r.u64();
  corpus.messages.reserve(std::size_t(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    Message m;
    m.message_id = r.str();
    m.thread_id = r.str();
    m.timestamp = r.i64();
    m.sender = r.str();
    m.recipients = r.str_vec();
    m.sender_name = r.str();
    m.recipient_names = r.str_vec();
    m.subject = r.str();
    m.body = r.str();
    const std::uint64_t na = r.u64();
    for (std::uint64_t k = 0; k < na; ++k) {
      Attachment a;
      a.item_id = r.str();
      a.filename = r.str();
      m.attachments.push_back(std::move(a));
    }
    const std::uint64_t ni = r.u64();
    for (std::uint64_t k = 0; k < ni; ++k) {
      ItemRef ref;
      ref.item_id = r.str();
      ref.kind = ItemKind(r.u8());
      m.items.push_back(std::move(ref));
    }
    m.subject_tokens = tokenize(m.subject);
    m.body_tokens = tokenize(m.body);
    corpus.messages.push_back(std::move(m));
  }
  corpus.rebuild_derived();
  return corpus;
}

std::string instance_to_json(const Instance& inst) {
  json j;
  j["request"] = inst.request_id;
  j["reply"] = inst.reply_id;
  j["replier"] = inst.replier;
  j["t_prime"] = inst.t_prime;
  j["relevant_items"] = std::vector<std::string>(inst.relevant_items.begin(), inst.relevant_items.end());
  return j.dump();
}

Instance instance_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
    Instance inst;
    inst.request_id = j.at("request").get<std::string>();
    inst.reply_id = j.at("reply").get<std::string>();
    inst.replier = j.at("replier").get<std::string>();
    inst.t_prime = j.at("t_prime").get<std::int64_t>();
    for (const auto& item : j.at("relevant_items")) inst.relevant_items.insert(item.get<std::string>());
    return inst;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid instance record: ") + e.what());
  }
}

void write_instances_jsonl(const std::vector<Instance>& instances, std::ostream& out) {
  for (const Instance& inst : instances) out << instance_to_json(inst) << "\n";
}

std::vector<Instance> read_instances_jsonl(std::istream& in) {
  std::vector<Instance> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(instance_from_json(line));
  return out;
}

}  // namespace attachrec

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace attachrec {

enum class ItemKind : std::uint8_t { attachment = 0, url = 1 };

struct ItemRef {
  std::string item_id;
  ItemKind kind;
};

struct Attachment {
  std::string item_id;
  std::string filename;
};

struct Message {
  std::string message_id;
  std::string thread_id;
  std::int64_t timestamp = 0;
  std::string sender;                        // address of "from"
  std::vector<std::string> recipients;       // addresses of "to"
  std::string sender_name;
  std::vector<std::string> recipient_names;
  std::string subject;
  std::string body;
  std::vector<Attachment> attachments;

  // Derived at parse time, cached for determinism.
  std::vector<std::string> subject_tokens;
  std::vector<std::string> body_tokens;
  std::vector<ItemRef> items;  // attachments + normalized body URLs, deduped in order

  std::size_t token_count() const { return subject_tokens.size() + body_tokens.size(); }
  bool carries(const std::string& item_id) const;
};

struct AttachableItem {
  std::string item_id;
  ItemKind kind = ItemKind::attachment;
  std::vector<std::size_t> carrier_messages;  // indexes into Corpus::messages, (timestamp, id) order
};

struct Corpus {
  std::vector<Message> messages;  // input order
  std::map<std::string, std::size_t> by_id;
  // Values sorted by (timestamp, message_id).
  std::map<std::string, std::vector<std::size_t>> threads;
  std::map<std::string, std::vector<std::size_t>> mailboxes;  // user = sender or recipient
  std::map<std::string, AttachableItem> items;

  const Message& message(const std::string& id) const;  // throws ValidationError
  void rebuild_derived();  // recomputes by_id/threads/mailboxes/items from messages
};

struct ParseResult {
  Corpus corpus;
  std::vector<std::string> warnings;  // e.g. unparsable URLs, with line numbers
};

// One JSON object per line. Malformed lines or duplicate message ids raise
// ValidationError naming the line number.
ParseResult parse_corpus_jsonl(std::istream& in);
ParseResult parse_corpus_file(const std::string& path);
void write_corpus_jsonl(const Corpus& corpus, std::ostream& out);

// Canonicalizes an absolute http(s) URL: lowercase scheme and host, fragment
// dropped, utm_* query parameters dropped, one trailing slash dropped from the
// path, everything else byte-preserved. Returns nullopt when unparsable.
std::optional<std::string> normalize_url(std::string_view url);

// Attachments plus normalized URLs found in the body, deduped, message order.
std::vector<ItemRef> extract_items(const Message& message, std::vector<std::string>* warnings = nullptr);

// Drops items whose message frequency falls in the bottom or top 5% of the
// item frequency distribution; ties at a percentile boundary are retained.
std::set<std::string> trim_item_outliers(const Corpus& corpus);

struct Instance {
  std::string request_id;
  std::string reply_id;
  std::string replier;  // sender of the reply
  std::int64_t t_prime = 0;  // reply timestamp
  std::set<std::string> relevant_items;
};

struct DropCounts {
  std::size_t no_thread_history = 0;
  std::size_t all_items_filtered = 0;
  std::size_t item_bearing_messages = 0;  // = drops + instances
};

struct MiningResult {
  std::vector<Instance> instances;  // sorted by (t_prime, reply_id)
  DropCounts drops;
};

// For each message carrying >=1 retained item: the request is the immediately
// preceding message of the thread in (timestamp, message_id) order; relevant
// items are those that neither occurred earlier in the thread nor are missing
// from the replier's mailbox strictly before the request timestamp.
MiningResult mine_instances(const Corpus& corpus, const std::set<std::string>& retained_items);

// All same-thread messages with timestamp strictly below t_prime (the message
// itself included when its own timestamp qualifies). Indexes into messages.
std::vector<std::size_t> context(const Corpus& corpus, const std::string& message_id, std::int64_t t_prime);

// Re-derives every instance invariant; returns human-readable violations.
std::vector<std::string> validate_instances(const Corpus& corpus,
                                            const std::set<std::string>& retained_items,
                                            const std::vector<Instance>& instances);

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

std::string instance_to_json(const Instance& inst);
Instance instance_from_json(const std::string& line);
void write_instances_jsonl(const std::vector<Instance>& instances, std::ostream& out);
std::vector<Instance> read_instances_jsonl(std::istream& in);

}  // namespace attachrec

#include <set>
#include <string>

#include "attachrec/features.hpp"

namespace attachrec {

namespace {

// Compact lexicons of common English words; lookup is context free, so a word
// listed as both is treated as a noun.
const char* const kNouns[] = {
    "access", "account", "action", "address", "agenda", "agreement", "analysis", "answer",
    "application", "approach", "april", "area", "article", "attachment", "audit", "august",
    "balance", "bank", "board", "budget", "building", "business", "calendar", "call", "capital",
    "case", "cash", "chain", "chairman", "change", "chart", "city", "client", "code", "committee",
    "companies", "company", "conference", "contract", "copy", "cost", "costs", "country", "credit",
    "customer", "data", "database", "date", "day", "deal", "december", "decision", "deck",
    "department", "design", "detail", "details", "development", "director", "discussion",
    "document", "documents", "dollar", "draft", "email", "employee", "energy", "engineer",
    "equipment", "event", "example", "executive", "expense", "facility", "fact", "family",
    "february", "feedback", "figure", "file", "files", "firm", "folder", "form", "friday", "fund",
    "gas", "goal", "group", "growth", "guide", "health", "history", "home", "hour", "house",
    "idea", "image", "income", "information", "interest", "interview", "invoice", "issue",
    "issues", "item", "items", "january", "job", "july", "june", "law", "letter", "level",
    "license", "line", "link", "list", "loan", "location", "management", "manager", "manual",
    "march", "margin", "market", "marketing", "material", "matter", "may", "meeting", "member",
    "memo", "message", "model", "monday", "money", "month", "morning", "name", "network",
    "news", "note", "notes", "notice", "november", "number", "october", "office", "oil",
    "opportunity", "option", "order", "outline", "overview", "page", "paper", "part", "partner",
    "party", "password", "people", "percent", "performance", "person", "phone", "photo", "plan",
    "plant", "point", "policy", "position", "power", "presentation", "president", "press",
    "price", "problem", "process", "product", "profile", "profit", "program", "project",
    "proposal", "purchase", "quarter", "question", "questions", "rate", "record", "region",
    "release", "report", "reports", "request", "research", "resume", "review", "revision",
    "risk", "room", "sale", "sales", "saturday", "schedule", "screen", "script", "season",
    "section", "security", "september", "server", "service", "sheet", "slide", "slides",
    "software", "source", "space", "spec", "spreadsheet", "staff", "standard", "statement",
    "status", "stock", "story", "strategy", "street", "student", "study", "summary", "sunday",
    "supply", "support", "survey", "system", "table", "talk", "target", "task", "tax", "team",
    "template", "test", "thursday", "ticket", "time", "title", "tool", "topic", "trade",
    "training", "tuesday", "unit", "update", "user", "value", "vendor", "version", "video",
    "view", "water", "way", "wednesday", "week", "weekend", "word", "work", "workshop", "year",
};

const char* const kVerbs[] = {
    "accept", "add", "advise", "agree", "allow", "apply", "approve", "arrange", "arrive", "ask",
    "attach", "attached", "attend", "become", "begin", "believe", "bring", "build", "buy",
    "cancel", "check", "choose", "close", "come", "compare", "complete", "confirm", "consider",
    "contact", "continue", "correct", "create", "decide", "define", "delete", "deliver",
    "describe", "discuss", "distribute", "download", "edit", "enclose", "enclosed", "ensure",
    "expect", "explain", "fill", "find", "finish", "fix", "follow", "forward", "forwarded",
    "get", "give", "go", "happen", "hear", "help", "hold", "identify", "implement", "include",
    "included", "inform", "install", "invite", "keep", "know", "learn", "leave", "let", "look",
    "make", "manage", "mean", "meet", "move", "need", "notify", "obtain", "open", "organize",
    "pay", "plan", "prepare", "present", "print", "proceed", "propose", "provide", "publish",
    "read", "receive", "received", "recommend", "reduce", "refer", "remember", "remind",
    "remove", "reply", "require", "resend", "reserve", "resolve", "respond", "return",
    "revise", "revised", "run", "save", "say", "schedule", "see", "sell", "send", "sent",
    "set", "share", "show", "sign", "speak", "start", "submit", "suggest", "take", "talk",
    "tell", "thank", "think", "try", "update", "updated", "upload", "use", "verify", "want",
    "work", "write",
};

const std::set<std::string>& noun_set() {
  static const std::set<std::string> s(std::begin(kNouns), std::end(kNouns));
  return s;
}

const std::set<std::string>& verb_set() {
  static const std::set<std::string> s(std::begin(kVerbs), std::end(kVerbs));
  return s;
}

}  // namespace

PosTag LexiconTagger::tag(const std::string& token) const {
  if (noun_set().count(token)) return PosTag::noun;
  if (verb_set().count(token)) return PosTag::verb;
  return PosTag::other;
}

}  // namespace attachrec

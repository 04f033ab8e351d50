#include "attachrec/tokenize.hpp"

namespace attachrec {

bool is_ascii_punct(char c) {
  constexpr std::string_view punct = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
  return punct.find(c) != std::string_view::npos;
}

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool contains_digit(std::string_view token) {
  for (char c : token)
    if (c >= '0' && c <= '9') return true;
  return false;
}

bool contains_punct(std::string_view token) {
  for (char c : token)
    if (is_ascii_punct(c)) return true;
  return false;
}

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && is_ascii_space(text[i])) ++i;
    std::size_t start = i;
    while (i < n && !is_ascii_space(text[i])) ++i;
    if (i == start) break;
    std::size_t lo = start, hi = i;
    while (lo < hi && is_ascii_punct(text[lo])) ++lo;
    while (hi > lo && is_ascii_punct(text[hi - 1])) --hi;
    if (hi > lo) tokens.push_back(ascii_lower(text.substr(lo, hi - lo)));
  }
  return tokens;
}

}  // namespace attachrec

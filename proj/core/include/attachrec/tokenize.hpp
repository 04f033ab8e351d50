#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace attachrec {

// Lowercases A-Z, splits on whitespace, strips leading/trailing ASCII
// punctuation while keeping interior punctuation ("state-of-the-art" stays
// one token). Tokens that strip to nothing are dropped. No stemming.
// Locale independent: only the ASCII ranges are touched.
std::vector<std::string> tokenize(std::string_view text);

bool is_ascii_punct(char c);
bool is_ascii_space(char c);
bool contains_digit(std::string_view token);
bool contains_punct(std::string_view token);
std::string ascii_lower(std::string_view text);

}  // namespace attachrec

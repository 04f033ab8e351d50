#pragma once

#include <set>
#include <string>
#include <string_view>

namespace attachrec {

// Fixed English stopword list embedded in the binary. The version string
// changes whenever the list changes so downstream artifacts can record it.
const std::set<std::string>& stopword_set();
std::string_view stopword_list_version();
bool is_stopword(const std::string& token);

}  // namespace attachrec

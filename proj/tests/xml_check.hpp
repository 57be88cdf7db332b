#pragma once

// Minimal XML well-formedness check shared by the test suites: balanced
// tags, quoted attribute values, no stray angle brackets in text.

#include <string>
#include <vector>

namespace e2ec::oracle {

inline bool xml_well_formed(const std::string& text) {
  std::vector<std::string> stack;
  size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '<') {
      if (text[i] == '>') return false;
      ++i;
      continue;
    }
    size_t j = i + 1;
    bool in_quote = false;
    while (j < text.size() && (text[j] != '>' || in_quote)) {
      if (text[j] == '"') in_quote = !in_quote;
      ++j;
    }
    if (j >= text.size()) return false;
    std::string tag = text.substr(i + 1, j - i - 1);
    i = j + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag.rfind("!--", 0) == 0) continue;  // declaration/comment
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const bool self_closing = tag.back() == '/';
    if (self_closing) tag.pop_back();
    const std::string name = tag.substr(0, tag.find_first_of(" \t\n"));
    if (name.empty()) return false;
    if (!self_closing) stack.push_back(name);
  }
  return stack.empty();
}

}  // namespace e2ec::oracle

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace prorank {

// Shared term normalization for the tokenizer and the BM25 index: ASCII
// lowercase, runs of alphanumerics (and any non-ASCII byte) form one term,
// every other non-space character is a term of its own, whitespace separates.
inline std::vector<std::string> normalize_terms(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z')) {
      current.push_back(static_cast<char>(c));
    } else if (c >= 'A' && c <= 'Z') {
      current.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      flush();
    } else {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return out;
}

}  // namespace prorank

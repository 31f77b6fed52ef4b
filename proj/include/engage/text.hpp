#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "engage/common.hpp"

namespace engage::text {

struct NormalizationConfig {
  bool lowercase = true;
  std::string url_token = "<url>";
  std::string mention_token = "<mention>";
  std::string number_token = "<num>";
  bool keep_emoji = true;

  void validate() const {
    if (url_token.empty() || mention_token.empty() || number_token.empty())
      throw UsageError("normalization placeholder tokens must be nonempty");
    if (url_token == mention_token || url_token == number_token ||
        mention_token == number_token)
      throw UsageError("normalization placeholder tokens must be distinct");
  }
};

using TokenSequence = std::vector<std::string>;

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
}

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || is_digit(c) || c == '_';
}

inline bool starts_with_icase(std::string_view s, std::size_t i, std::string_view prefix) {
  if (s.size() - i < prefix.size()) return false;
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    char a = s[i + k];
    if (a >= 'A' && a <= 'Z') a = static_cast<char>(a - 'A' + 'a');
    if (a != prefix[k]) return false;
  }
  return true;
}

}  // namespace detail

// Replaces URLs, @-mentions, and digit runs with placeholder tokens and
// optionally case-folds ASCII. Idempotent: the placeholders contain no
// characters that re-trigger a replacement.
inline std::string normalize(std::string_view s, const NormalizationConfig& config = {}) {
  config.validate();
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (detail::starts_with_icase(s, i, "http://") ||
        detail::starts_with_icase(s, i, "https://") ||
        detail::starts_with_icase(s, i, "www.")) {
      out += config.url_token;
      while (i < s.size() && !detail::is_space(s[i])) ++i;
      continue;
    }
    if (c == '@' && i + 1 < s.size() && detail::is_word_char(s[i + 1])) {
      out += config.mention_token;
      ++i;
      while (i < s.size() && detail::is_word_char(s[i])) ++i;
      continue;
    }
    if (detail::is_digit(c)) {
      out += config.number_token;
      while (i < s.size() && detail::is_digit(s[i])) ++i;
      continue;
    }
    if (config.lowercase && c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    out += c;
    ++i;
  }
  return out;
}

// Whitespace split, then trailing sentence punctuation (. , ! ?) peeled into
// standalone tokens. '?' splits anywhere in a chunk: the dialogue tagger keys
// on it as its own token.
inline TokenSequence tokenize(std::string_view s) {
  TokenSequence tokens;
  std::size_t i = 0;
  auto emit_chunk = [&](std::string_view chunk) {
    // split interior '?' first
    std::size_t start = 0;
    std::vector<std::string_view> parts;
    for (std::size_t k = 0; k < chunk.size(); ++k) {
      if (chunk[k] == '?') {
        if (k > start) parts.push_back(chunk.substr(start, k - start));
        parts.push_back(chunk.substr(k, 1));
        start = k + 1;
      }
    }
    if (start < chunk.size()) parts.push_back(chunk.substr(start));
    for (std::string_view part : parts) {
      // peel trailing . , !
      std::size_t end = part.size();
      std::size_t tail = 0;
      while (end - tail > 1 &&
             (part[end - tail - 1] == '.' || part[end - tail - 1] == ',' ||
              part[end - tail - 1] == '!'))
        ++tail;
      tokens.emplace_back(part.substr(0, end - tail));
      for (std::size_t k = end - tail; k < end; ++k)
        tokens.emplace_back(1, part[k]);
    }
  };
  while (i < s.size()) {
    while (i < s.size() && detail::is_space(s[i])) ++i;
    std::size_t start = i;
    while (i < s.size() && !detail::is_space(s[i])) ++i;
    if (i > start) emit_chunk(s.substr(start, i - start));
  }
  return tokens;
}

inline constexpr std::string_view kBos = "<s>";
inline constexpr std::string_view kEos = "</s>";

// All contiguous n-grams. With pad, the sequence is wrapped in (n-1) start
// symbols and one end symbol, so a padded sequence of length L yields L+1
// n-grams; unpadded yields max(0, L-n+1).
inline std::vector<std::vector<std::string>> ngrams(const TokenSequence& tokens,
                                                    std::size_t n, bool pad) {
  if (n == 0) throw UsageError("ngram order must be >= 1");
  std::vector<std::string> seq;
  seq.reserve(tokens.size() + n);
  if (pad)
    for (std::size_t k = 0; k + 1 < n; ++k) seq.emplace_back(kBos);
  seq.insert(seq.end(), tokens.begin(), tokens.end());
  if (pad) seq.emplace_back(kEos);

  std::vector<std::vector<std::string>> out;
  if (seq.size() < n) return out;
  out.reserve(seq.size() - n + 1);
  for (std::size_t i = 0; i + n <= seq.size(); ++i)
    out.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(i),
                     seq.begin() + static_cast<std::ptrdiff_t>(i + n));
  return out;
}

inline bool is_punct_token(std::string_view t) {
  if (t.empty()) return false;
  for (char c : t)
    if (c != '.' && c != ',' && c != '!' && c != '?') return false;
  return true;
}

inline bool is_placeholder_token(std::string_view t) {
  return t.size() >= 3 && t.front() == '<' && t.back() == '>';
}

}  // namespace engage::text

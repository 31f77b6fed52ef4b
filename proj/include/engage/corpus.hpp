#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "engage/common.hpp"
#include "engage/csv.hpp"
#include "engage/text.hpp"

namespace engage::corpus {

struct Tweet {
  std::string tweet_id;
  std::string author_id;
  bool inbound = false;  // true = customer-authored
  std::int64_t created_at = 0;
  std::string text;
  std::vector<std::string> response_tweet_ids;
  std::string in_response_to;  // empty = absent
};

enum class Role : std::uint8_t { kCustomer, kBrand, kOther };

inline std::string_view role_name(Role r) {
  switch (r) {
    case Role::kCustomer: return "CUSTOMER";
    case Role::kBrand: return "BRAND";
    default: return "OTHER";
  }
}

struct Conversation {
  std::string conversation_id;  // root tweet id
  std::string brand_id;         // empty when no brand turn exists
  std::string customer_id;      // author of the root tweet
  struct Turn {
    Role role;
    Tweet tweet;
  };
  std::vector<Turn> turns;  // chronological, root first

  bool has_brand_turn() const { return !brand_id.empty(); }

  const Tweet& root_tweet() const { return turns.front().tweet; }

  // Chronologically first BRAND turn; requires has_brand_turn().
  const Tweet& initial_brand_tweet() const {
    for (const Turn& t : turns)
      if (t.role == Role::kBrand) return t.tweet;
    throw DataError("conversation " + conversation_id + " has no brand turn");
  }
};

struct EngagementLabel {
  std::uint32_t customer_turns = 0;
  std::uint32_t engagement_count = 0;  // customer_turns - 1
  bool engaged = false;                // customer_turns > 1
};

struct CorpusStats {
  std::uint64_t total_tweets = 0;  // tweets appearing in conversations
  std::uint64_t total_conversations = 0;
  std::uint64_t engaged_count = 0;
  double mean_turns_per_conversation = 0.0;
  double mean_words_per_tweet = 0.0;
  std::uint64_t max_conversation_length = 0;
  std::vector<std::pair<std::string, std::uint64_t>> per_brand_tweet_counts;  // sorted by brand id
};

// ---------------------------------------------------------------------------
// Timestamp parsing: integer epoch seconds, the Twitter export format
// ("Tue Oct 31 22:10:47 +0000 2017"), or "YYYY-MM-DD[ T]HH:MM:SS[Z|+-HHMM]".
// ---------------------------------------------------------------------------
namespace detail {

inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline bool parse_uint(std::string_view s, std::size_t& i, int digits, int& out) {
  out = 0;
  for (int k = 0; k < digits; ++k) {
    if (i >= s.size() || s[i] < '0' || s[i] > '9') return false;
    out = out * 10 + (s[i] - '0');
    ++i;
  }
  return true;
}

inline int month_from_abbrev(std::string_view m) {
  static constexpr std::string_view names[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                               "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  for (int k = 0; k < 12; ++k)
    if (m == names[k]) return k + 1;
  return 0;
}

}  // namespace detail

inline std::optional<std::int64_t> parse_timestamp(std::string_view raw) {
  std::string s = trim(raw);
  if (s.empty()) return std::nullopt;

  bool all_digits = true;
  for (std::size_t k = (s[0] == '-' ? 1 : 0); k < s.size(); ++k)
    if (s[k] < '0' || s[k] > '9') {
      all_digits = false;
      break;
    }
  if (all_digits && !(s.size() == 1 && s[0] == '-')) {
    try {
      return std::stoll(s);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  // Twitter format: Www Mmm DD HH:MM:SS +ZZZZ YYYY
  if (s.size() >= 30 && s[3] == ' ' && s[7] == ' ') {
    int month = detail::month_from_abbrev(std::string_view(s).substr(4, 3));
    if (month != 0) {
      std::size_t i = 8;
      int day, hh, mm, ss, off_h, off_m, year;
      if (detail::parse_uint(s, i, 2, day) && s[i] == ' ' && (++i, true) &&
          detail::parse_uint(s, i, 2, hh) && s[i] == ':' && (++i, true) &&
          detail::parse_uint(s, i, 2, mm) && s[i] == ':' && (++i, true) &&
          detail::parse_uint(s, i, 2, ss) && s[i] == ' ' && (++i, true) &&
          (s[i] == '+' || s[i] == '-')) {
        int sign = s[i] == '-' ? -1 : 1;
        ++i;
        if (detail::parse_uint(s, i, 2, off_h) && detail::parse_uint(s, i, 2, off_m) &&
            i < s.size() && s[i] == ' ' && (++i, true) && detail::parse_uint(s, i, 4, year)) {
          std::int64_t days = detail::days_from_civil(year, static_cast<unsigned>(month),
                                                      static_cast<unsigned>(day));
          std::int64_t secs = days * 86400 + hh * 3600 + mm * 60 + ss;
          secs -= sign * (off_h * 3600 + off_m * 60);
          return secs;
        }
      }
    }
  }

  // ISO-ish: YYYY-MM-DD[ T]HH:MM:SS
  {
    std::size_t i = 0;
    int year, month, day, hh, mm, ss;
    if (detail::parse_uint(s, i, 4, year) && i < s.size() && s[i] == '-' && (++i, true) &&
        detail::parse_uint(s, i, 2, month) && i < s.size() && s[i] == '-' && (++i, true) &&
        detail::parse_uint(s, i, 2, day)) {
      hh = mm = ss = 0;
      if (i < s.size() && (s[i] == ' ' || s[i] == 'T')) {
        ++i;
        if (!(detail::parse_uint(s, i, 2, hh) && i < s.size() && s[i] == ':' && (++i, true) &&
              detail::parse_uint(s, i, 2, mm)))
          return std::nullopt;
        if (i < s.size() && s[i] == ':') {
          ++i;
          if (!detail::parse_uint(s, i, 2, ss)) return std::nullopt;
        }
      }
      if (month < 1 || month > 12 || day < 1 || day > 31) return std::nullopt;
      std::int64_t days = detail::days_from_civil(year, static_cast<unsigned>(month),
                                                  static_cast<unsigned>(day));
      return days * 86400 + hh * 3600 + mm * 60 + ss;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// parse_corpus: streaming CSV -> Tweet. Malformed records are counted and
// skipped; a missing required column is fatal.
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& corpus_columns() {
  static const std::vector<std::string> cols = {
      "tweet_id",          "author_id",        "inbound", "created_at",
      "text",              "response_tweet_id", "in_response_to_tweet_id"};
  return cols;
}

class TweetReader {
 public:
  explicit TweetReader(std::istream& is) : reader_(is) {
    std::vector<std::string> header;
    if (!reader_.read_record(header)) throw DataError("corpus file is empty");
    for (std::size_t i = 0; i < header.size(); ++i) col_index_[trim(header[i])] = i;
    for (const std::string& col : corpus_columns())
      if (!col_index_.count(col))
        throw DataError("corpus file is missing required column '" + col + "'");
    width_ = header.size();
  }

  std::optional<Tweet> next() {
    std::vector<std::string> fields;
    while (reader_.read_record(fields)) {
      if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
      if (fields.size() != width_) {
        ++skipped_;
        continue;
      }
      Tweet t;
      t.tweet_id = trim(fields[col_index_.at("tweet_id")]);
      t.author_id = trim(fields[col_index_.at("author_id")]);
      std::string inbound = to_lower_ascii(trim(fields[col_index_.at("inbound")]));
      std::optional<std::int64_t> ts = parse_timestamp(fields[col_index_.at("created_at")]);
      if (t.tweet_id.empty() || t.author_id.empty() || !ts ||
          (inbound != "true" && inbound != "false" && inbound != "1" && inbound != "0")) {
        ++skipped_;
        continue;
      }
      t.inbound = (inbound == "true" || inbound == "1");
      t.created_at = *ts;
      t.text = fields[col_index_.at("text")];
      std::string in_reply = trim(fields[col_index_.at("in_response_to_tweet_id")]);
      t.in_response_to = std::move(in_reply);
      std::string responses = trim(fields[col_index_.at("response_tweet_id")]);
      if (!responses.empty()) {
        for (std::string& id : split(responses, ',')) {
          std::string v = trim(id);
          if (!v.empty()) t.response_tweet_ids.push_back(std::move(v));
        }
      }
      ++parsed_;
      return t;
    }
    return std::nullopt;
  }

  std::uint64_t parsed_count() const { return parsed_; }
  std::uint64_t skipped_count() const { return skipped_; }
  std::uint64_t record_number() const { return reader_.record_number(); }

 private:
  csv::Reader reader_;
  std::unordered_map<std::string, std::size_t> col_index_;
  std::size_t width_ = 0;
  std::uint64_t parsed_ = 0;
  std::uint64_t skipped_ = 0;
};

inline std::vector<Tweet> read_all_tweets(std::istream& is, std::uint64_t* skipped = nullptr) {
  TweetReader reader(is);
  std::vector<Tweet> tweets;
  while (auto t = reader.next()) tweets.push_back(std::move(*t));
  if (skipped) *skipped = reader.skipped_count();
  return tweets;
}

// ---------------------------------------------------------------------------
// thread_conversations
// ---------------------------------------------------------------------------

struct ThreadStats {
  std::uint64_t total_tweets = 0;          // input size
  std::uint64_t threaded_tweets = 0;       // sum of conversation sizes
  std::uint64_t dropped_orphans = 0;       // replies whose parent is absent (plus descendants)
  std::uint64_t dropped_brand_rooted = 0;  // trees rooted at a brand-authored tweet
  std::uint64_t cycles_broken = 0;
};

struct ThreadResult {
  std::vector<Conversation> conversations;
  ThreadStats stats;
};

namespace detail {

// Chronological order with tweet-id tiebreak.
inline bool tweet_before(const Tweet& a, const Tweet& b) {
  if (a.created_at != b.created_at) return a.created_at < b.created_at;
  return a.tweet_id < b.tweet_id;
}

}  // namespace detail

inline ThreadResult thread_conversations(std::vector<Tweet> tweets) {
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  const std::size_t n = tweets.size();

  ThreadResult result;
  result.stats.total_tweets = n;

  std::unordered_map<std::string_view, std::uint32_t> index;
  index.reserve(n * 2);
  for (std::size_t i = 0; i < n; ++i) index.emplace(tweets[i].tweet_id, static_cast<std::uint32_t>(i));

  std::vector<std::uint32_t> parent(n, kNone);
  std::vector<char> orphan(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& p = tweets[i].in_response_to;
    if (p.empty()) continue;
    auto it = index.find(p);
    if (it == index.end()) {
      orphan[i] = 1;  // parent referenced but absent from the corpus
    } else if (it->second == i) {
      ++result.stats.cycles_broken;  // self-reply; drop the edge
      tweets[i].in_response_to.clear();
    } else {
      parent[i] = it->second;
    }
  }

  // Break reply cycles: walk parent chains; a chain that re-enters itself is a
  // cycle, cut at the newest member's outgoing edge.
  {
    std::vector<std::uint8_t> state(n, 0);  // 0 unvisited, 1 on current path, 2 done
    std::vector<std::uint32_t> path;
    for (std::uint32_t start = 0; start < n; ++start) {
      if (state[start]) continue;
      path.clear();
      std::uint32_t u = start;
      while (u != kNone && state[u] == 0) {
        state[u] = 1;
        path.push_back(u);
        u = parent[u];
      }
      if (u != kNone && state[u] == 1) {
        // found a cycle; collect members starting at u
        std::uint32_t newest = u;
        for (std::uint32_t v = parent[u]; v != u; v = parent[v])
          if (detail::tweet_before(tweets[newest], tweets[v])) newest = v;
        parent[newest] = kNone;
        tweets[newest].in_response_to.clear();
        ++result.stats.cycles_broken;
      }
      for (std::uint32_t v : path) state[v] = 2;
    }
  }

  std::vector<std::vector<std::uint32_t>> children(n);
  for (std::uint32_t i = 0; i < n; ++i)
    if (parent[i] != kNone) children[parent[i]].push_back(i);

  std::vector<char> consumed(n, 0);
  std::vector<std::uint32_t> subtree;
  auto collect_subtree = [&](std::uint32_t root) {
    subtree.clear();
    subtree.push_back(root);
    for (std::size_t q = 0; q < subtree.size(); ++q)
      for (std::uint32_t c : children[subtree[q]]) subtree.push_back(c);
    for (std::uint32_t v : subtree) consumed[v] = 1;
  };

  for (std::uint32_t i = 0; i < n; ++i) {
    if (consumed[i]) continue;
    bool is_root = parent[i] == kNone && !orphan[i];
    bool is_orphan_root = orphan[i] != 0;
    if (!is_root && !is_orphan_root) continue;

    collect_subtree(i);
    if (is_orphan_root) {
      result.stats.dropped_orphans += subtree.size();
      continue;
    }
    if (!tweets[i].inbound) {
      result.stats.dropped_brand_rooted += subtree.size();
      continue;
    }

    // Root first, remaining turns chronological.
    std::sort(subtree.begin() + 1, subtree.end(), [&](std::uint32_t a, std::uint32_t b) {
      return detail::tweet_before(tweets[a], tweets[b]);
    });

    Conversation conv;
    conv.conversation_id = tweets[i].tweet_id;
    conv.customer_id = tweets[i].author_id;
    for (std::uint32_t v : subtree)
      if (conv.brand_id.empty() && !tweets[v].inbound && tweets[v].author_id != conv.customer_id)
        conv.brand_id = tweets[v].author_id;

    conv.turns.reserve(subtree.size());
    for (std::uint32_t v : subtree) {
      Role role = Role::kOther;
      if (tweets[v].author_id == conv.customer_id) role = Role::kCustomer;
      else if (!conv.brand_id.empty() && tweets[v].author_id == conv.brand_id) role = Role::kBrand;
      conv.turns.push_back({role, std::move(tweets[v])});
    }
    result.stats.threaded_tweets += conv.turns.size();
    result.conversations.push_back(std::move(conv));
  }

  // Anything left unconsumed hangs off a dropped subtree (can happen when a
  // cycle cut produced a brand root). Classify as orphan-dropped.
  for (std::uint32_t i = 0; i < n; ++i)
    if (!consumed[i]) ++result.stats.dropped_orphans;

  return result;
}

// ---------------------------------------------------------------------------
// label_engagement
// ---------------------------------------------------------------------------

inline EngagementLabel label_engagement(const Conversation& conv) {
  if (!conv.has_brand_turn())
    throw DataError("conversation " + conv.conversation_id +
                    " has no brand turn; engagement is undefined");
  EngagementLabel label;
  for (const Conversation::Turn& t : conv.turns)
    if (t.role == Role::kCustomer) ++label.customer_turns;
  label.engagement_count = label.customer_turns > 0 ? label.customer_turns - 1 : 0;
  label.engaged = label.customer_turns > 1;
  return label;
}

// ---------------------------------------------------------------------------
// split_train_test
// ---------------------------------------------------------------------------

inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw UsageError("train fraction must lie in (0, 1)");
  if (n == 0) throw UsageError("cannot split an empty conversation list");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::size_t train_n = static_cast<std::size_t>(static_cast<double>(n) * train_fraction);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_n));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(train_n), order.end());
  return {std::move(train), std::move(test)};
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_train_test(const std::vector<T>& items,
                                                           double train_fraction,
                                                           std::uint64_t seed) {
  auto [train_idx, test_idx] = split_indices(items.size(), train_fraction, seed);
  std::pair<std::vector<T>, std::vector<T>> out;
  out.first.reserve(train_idx.size());
  out.second.reserve(test_idx.size());
  for (std::size_t i : train_idx) out.first.push_back(items[i]);
  for (std::size_t i : test_idx) out.second.push_back(items[i]);
  return out;
}

// ---------------------------------------------------------------------------
// corpus_stats
// ---------------------------------------------------------------------------

inline CorpusStats corpus_stats(const std::vector<Conversation>& conversations,
                                const text::NormalizationConfig& norm = {}) {
  CorpusStats stats;
  stats.total_conversations = conversations.size();
  std::uint64_t word_total = 0;
  std::unordered_map<std::string, std::uint64_t> per_brand;
  for (const Conversation& conv : conversations) {
    stats.total_tweets += conv.turns.size();
    stats.max_conversation_length = std::max<std::uint64_t>(stats.max_conversation_length,
                                                            conv.turns.size());
    if (conv.has_brand_turn() && label_engagement(conv).engaged) ++stats.engaged_count;
    if (!conv.brand_id.empty()) per_brand[conv.brand_id] += conv.turns.size();
    for (const Conversation::Turn& t : conv.turns) {
      text::TokenSequence tokens = text::tokenize(text::normalize(t.tweet.text, norm));
      for (const std::string& tok : tokens)
        if (!text::is_punct_token(tok)) ++word_total;
    }
  }
  if (!conversations.empty()) {
    stats.mean_turns_per_conversation =
        static_cast<double>(stats.total_tweets) / static_cast<double>(stats.total_conversations);
    stats.mean_words_per_tweet =
        stats.total_tweets ? static_cast<double>(word_total) / static_cast<double>(stats.total_tweets)
                           : 0.0;
  }
  stats.per_brand_tweet_counts.assign(per_brand.begin(), per_brand.end());
  std::sort(stats.per_brand_tweet_counts.begin(), stats.per_brand_tweet_counts.end());
  return stats;
}

}  // namespace engage::corpus

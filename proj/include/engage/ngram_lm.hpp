#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "engage/common.hpp"
#include "engage/text.hpp"

namespace engage::lm {

using TokenId = std::uint32_t;

constexpr TokenId kUnkId = 0;
constexpr TokenId kBosId = 1;
constexpr TokenId kEosId = 2;
constexpr int kMaxOrder = 6;

class Vocab {
 public:
  Vocab() {
    add("<unk>");
    add("<s>");
    add("</s>");
  }

  TokenId add(std::string_view token) {
    auto it = index_.find(std::string(token));
    if (it != index_.end()) return it->second;
    TokenId id = static_cast<TokenId>(tokens_.size());
    tokens_.emplace_back(token);
    index_.emplace(tokens_.back(), id);
    return id;
  }

  // <unk> for unseen tokens.
  TokenId lookup(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnkId : it->second;
  }

  bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Fixed-capacity n-gram key; order is bounded by kMaxOrder.
struct Gram {
  std::uint8_t len = 0;
  std::array<TokenId, kMaxOrder> ids{};

  static Gram of(std::span<const TokenId> span) {
    Gram g;
    g.len = static_cast<std::uint8_t>(span.size());
    for (std::size_t i = 0; i < span.size(); ++i) g.ids[i] = span[i];
    return g;
  }

  std::span<const TokenId> span() const { return {ids.data(), len}; }
  TokenId first() const { return ids[0]; }
  TokenId last() const { return ids[len - 1]; }

  Gram prefix() const {  // context of this gram
    Gram g = *this;
    g.len = static_cast<std::uint8_t>(len - 1);
    g.ids[g.len] = 0;
    return g;
  }
  Gram suffix() const {  // drop leftmost token
    Gram g;
    g.len = static_cast<std::uint8_t>(len - 1);
    for (std::uint8_t i = 0; i < g.len; ++i) g.ids[i] = ids[i + 1];
    return g;
  }

  bool operator==(const Gram& o) const {
    if (len != o.len) return false;
    for (std::uint8_t i = 0; i < len; ++i)
      if (ids[i] != o.ids[i]) return false;
    return true;
  }
  bool operator<(const Gram& o) const {
    for (std::uint8_t i = 0; i < len && i < o.len; ++i)
      if (ids[i] != o.ids[i]) return ids[i] < o.ids[i];
    return len < o.len;
  }
};

struct GramHash {
  std::size_t operator()(const Gram& g) const {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ g.len;
    for (std::uint8_t i = 0; i < g.len; ++i) {
      h ^= g.ids[i] + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h *= 0xff51afd7ed558ccdULL;
    }
    return static_cast<std::size_t>(h);
  }
};

template <typename V>
using GramMap = std::unordered_map<Gram, V, GramHash>;

// ---------------------------------------------------------------------------
// Counting
// ---------------------------------------------------------------------------

class NGramCounts {
 public:
  explicit NGramCounts(int order) : order_(order), tables_(static_cast<std::size_t>(order)) {
    if (order < 1 || order > kMaxOrder)
      throw UsageError("ngram order must lie in [1, " + std::to_string(kMaxOrder) + "]");
  }

  void add(const text::TokenSequence& tokens) {
    ++sentences_;
    std::vector<TokenId> padded;
    padded.reserve(tokens.size() + static_cast<std::size_t>(order_));
    for (int k = 0; k + 1 < order_; ++k) padded.push_back(kBosId);
    for (const std::string& t : tokens) padded.push_back(vocab_.add(t));
    padded.push_back(kEosId);
    // The order-n padding is the suffix of the order-N padding that keeps
    // (n-1) start symbols.
    for (int n = 1; n <= order_; ++n) {
      std::size_t start = static_cast<std::size_t>(order_ - n);
      auto& table = tables_[static_cast<std::size_t>(n - 1)];
      for (std::size_t i = start; i + static_cast<std::size_t>(n) <= padded.size(); ++i)
        ++table[Gram::of({padded.data() + i, static_cast<std::size_t>(n)})];
    }
  }

  // Combining two independently counted shards must equal one-pass counting;
  // ids are remapped through token strings.
  void merge(const NGramCounts& other) {
    if (other.order_ != order_) throw UsageError("cannot merge counts of different orders");
    sentences_ += other.sentences_;
    std::vector<TokenId> remap(other.vocab_.size());
    for (TokenId id = 0; id < other.vocab_.size(); ++id)
      remap[id] = vocab_.add(other.vocab_.token(id));
    for (int n = 1; n <= order_; ++n) {
      for (const auto& [gram, count] : other.tables_[static_cast<std::size_t>(n - 1)]) {
        Gram g = gram;
        for (std::uint8_t i = 0; i < g.len; ++i) g.ids[i] = remap[g.ids[i]];
        tables_[static_cast<std::size_t>(n - 1)][g] += count;
      }
    }
  }

  int order() const { return order_; }
  std::uint64_t sentences() const { return sentences_; }
  const Vocab& vocab() const { return vocab_; }
  const GramMap<std::uint64_t>& table(int n) const {
    return tables_.at(static_cast<std::size_t>(n - 1));
  }

  std::uint64_t total_tokens(int n) const {
    std::uint64_t total = 0;
    for (const auto& [gram, count] : table(n)) total += count;
    return total;
  }

  // k -> number of n-grams observed exactly k times.
  std::map<std::uint64_t, std::uint64_t> counts_of_counts(int n) const {
    std::map<std::uint64_t, std::uint64_t> cc;
    for (const auto& [gram, count] : table(n)) ++cc[count];
    return cc;
  }

 private:
  int order_;
  Vocab vocab_;
  std::vector<GramMap<std::uint64_t>> tables_;
  std::uint64_t sentences_ = 0;
};

template <typename Range>
NGramCounts count_ngrams(const Range& sentences, int order) {
  NGramCounts counts(order);
  for (const auto& s : sentences) counts.add(s);
  if (counts.sentences() == 0) throw DataError("cannot estimate a language model from zero sentences");
  return counts;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct Discounts {
  double d1 = 0.0, d2 = 0.0, d3 = 0.0;
  double for_count(std::uint64_t c) const { return c == 1 ? d1 : (c == 2 ? d2 : d3); }
};

enum class Smoothing : std::uint8_t { kInterpolatedKn = 0, kMle = 1 };

struct PerplexityScore {
  double value = 0.0;
  std::uint64_t token_count = 0;  // content tokens plus </s>
  std::uint64_t oov_count = 0;
};

struct ProbBackoff {
  double ln_prob = 0.0;
  double ln_backoff = 0.0;  // ln(1) when this gram never backs anything off
};

class KNModel {
 public:
  int order() const { return order_; }
  Smoothing smoothing() const { return smoothing_; }
  const Vocab& vocab() const { return vocab_; }
  const std::vector<Discounts>& discounts() const { return discounts_; }
  const std::vector<std::string>& estimation_warnings() const { return warnings_; }
  const GramMap<ProbBackoff>& table(int n) const {
    return tables_.at(static_cast<std::size_t>(n - 1));
  }

  double log_prob_ids(std::span<const TokenId> context, TokenId word) const {
    std::size_t max_ctx = static_cast<std::size_t>(order_ - 1);
    if (context.size() > max_ctx) context = context.subspan(context.size() - max_ctx);

    if (smoothing_ == Smoothing::kMle) {
      Gram g;
      g.len = static_cast<std::uint8_t>(context.size() + 1);
      for (std::size_t i = 0; i < context.size(); ++i) g.ids[i] = context[i];
      g.ids[context.size()] = word;
      const auto& table = tables_[context.size()];
      auto it = table.find(g);
      if (it != table.end()) return it->second.ln_prob;
      return kMleFloorLog;
    }

    double backed_off = 0.0;
    for (std::size_t k = context.size() + 1; k-- > 0;) {
      Gram g;
      g.len = static_cast<std::uint8_t>(k + 1);
      for (std::size_t i = 0; i < k; ++i) g.ids[i] = context[context.size() - k + i];
      g.ids[k] = word;
      const auto& table = tables_[k];
      auto it = table.find(g);
      if (it != table.end()) return backed_off + it->second.ln_prob;
      if (k >= 1) {
        Gram h = g.prefix();
        auto hit = tables_[k - 1].find(h);
        if (hit != tables_[k - 1].end()) backed_off += hit->second.ln_backoff;
      }
    }
    // unreachable in a well-formed model: the unigram table covers the vocab
    return kMleFloorLog;
  }

  double log_prob(const std::vector<std::string>& context, std::string_view word) const {
    std::vector<TokenId> ids;
    ids.reserve(context.size());
    for (const std::string& t : context) ids.push_back(vocab_.lookup(t));
    return log_prob_ids(ids, vocab_.lookup(word));
  }

  PerplexityScore perplexity(const text::TokenSequence& tokens) const {
    if (tokens.empty()) throw UsageError("cannot compute perplexity of an empty token sequence");
    PerplexityScore score;
    std::vector<TokenId> padded;
    padded.reserve(tokens.size() + static_cast<std::size_t>(order_));
    for (int k = 0; k + 1 < order_; ++k) padded.push_back(kBosId);
    for (const std::string& t : tokens) {
      TokenId id = vocab_.lookup(t);
      if (id == kUnkId && t != "<unk>") ++score.oov_count;
      padded.push_back(id);
    }
    padded.push_back(kEosId);

    std::size_t ctx = static_cast<std::size_t>(order_ - 1);
    double ln_sum = 0.0;
    for (std::size_t i = ctx; i < padded.size(); ++i) {
      double lp = log_prob_ids({padded.data() + i - ctx, ctx}, padded[i]);
      if (smoothing_ == Smoothing::kMle && lp < kMleFloorLog) lp = kMleFloorLog;
      ln_sum += lp;
    }
    score.token_count = tokens.size() + 1;  // content tokens plus </s>, never <s>
    score.value = std::exp(-ln_sum / static_cast<double>(score.token_count));
    return score;
  }

  // -- serialization ---------------------------------------------------------

  void save(std::ostream& os) const {
    os.write("ENLM", 4);
    bin::write_int<std::uint16_t>(os, kFormatVersion);
    bin::write_int<std::uint8_t>(os, static_cast<std::uint8_t>(smoothing_));
    bin::write_int<std::uint8_t>(os, static_cast<std::uint8_t>(order_));
    for (const Discounts& d : discounts_) {
      bin::write_f64(os, d.d1);
      bin::write_f64(os, d.d2);
      bin::write_f64(os, d.d3);
    }
    bin::write_int<std::uint32_t>(os, static_cast<std::uint32_t>(vocab_.size()));
    for (TokenId id = 0; id < vocab_.size(); ++id) bin::write_string(os, vocab_.token(id));
    for (int n = 1; n <= order_; ++n) {
      std::vector<std::pair<Gram, ProbBackoff>> rows = sorted_rows(n);
      bin::write_int<std::uint64_t>(os, rows.size());
      for (const auto& [gram, pb] : rows) {
        for (std::uint8_t i = 0; i < gram.len; ++i) bin::write_int<std::uint32_t>(os, gram.ids[i]);
        bin::write_f64(os, pb.ln_prob);
        bin::write_f64(os, pb.ln_backoff);
      }
    }
  }

  static KNModel load(std::istream& is) {
    bin::Reader r(is);
    char magic[4];
    r.read_bytes(magic, 4);
    if (std::string_view(magic, 4) != "ENLM")
      throw FormatError("bad model magic; expected ENLM", 0);
    std::uint16_t version = r.read_int<std::uint16_t>();
    if (version != kFormatVersion)
      throw FormatError("unsupported model version " + std::to_string(version), r.offset());
    KNModel m;
    m.smoothing_ = static_cast<Smoothing>(r.read_int<std::uint8_t>());
    int order = r.read_int<std::uint8_t>();
    if (order < 1 || order > kMaxOrder) throw FormatError("model order out of range", r.offset());
    m.order_ = order;
    m.discounts_.resize(static_cast<std::size_t>(order));
    for (Discounts& d : m.discounts_) {
      d.d1 = r.read_f64();
      d.d2 = r.read_f64();
      d.d3 = r.read_f64();
    }
    std::uint32_t vocab_size = r.read_int<std::uint32_t>();
    if (vocab_size < 3) throw FormatError("model vocabulary too small", r.offset());
    for (std::uint32_t i = 0; i < vocab_size; ++i) {
      std::string token = r.read_string();
      if (i >= 3) m.vocab_.add(token);
    }
    if (m.vocab_.size() != vocab_size) throw FormatError("duplicate vocabulary entries", r.offset());
    m.tables_.resize(static_cast<std::size_t>(order));
    for (int n = 1; n <= order; ++n) {
      std::uint64_t rows = r.read_int<std::uint64_t>();
      auto& table = m.tables_[static_cast<std::size_t>(n - 1)];
      table.reserve(rows * 2);
      for (std::uint64_t k = 0; k < rows; ++k) {
        Gram g;
        g.len = static_cast<std::uint8_t>(n);
        for (int i = 0; i < n; ++i) {
          g.ids[static_cast<std::size_t>(i)] = r.read_int<std::uint32_t>();
          if (g.ids[static_cast<std::size_t>(i)] >= vocab_size)
            throw FormatError("token id out of range", r.offset());
        }
        ProbBackoff pb;
        pb.ln_prob = r.read_f64();
        pb.ln_backoff = r.read_f64();
        table.emplace(g, pb);
      }
    }
    return m;
  }

  // ARPA text export (log10 probabilities, tab-separated).
  void write_arpa(std::ostream& os) const {
    constexpr double ln10 = 2.302585092994045684;
    os << "\\data\\\n";
    for (int n = 1; n <= order_; ++n)
      os << "ngram " << n << "=" << table(n).size() << "\n";
    char buf[64];
    for (int n = 1; n <= order_; ++n) {
      os << "\n\\" << n << "-grams:\n";
      for (const auto& [gram, pb] : sorted_rows(n)) {
        std::snprintf(buf, sizeof(buf), "%.17g", pb.ln_prob / ln10);
        os << buf << '\t';
        for (std::uint8_t i = 0; i < gram.len; ++i) {
          if (i) os << ' ';
          os << vocab_.token(gram.ids[i]);
        }
        if (n < order_) {
          std::snprintf(buf, sizeof(buf), "%.17g", pb.ln_backoff / ln10);
          os << '\t' << buf;
        }
        os << "\n";
      }
    }
    os << "\n\\end\\\n";
  }

  static KNModel read_arpa(std::istream& is) {
    constexpr double ln10 = 2.302585092994045684;
    KNModel m;
    m.smoothing_ = Smoothing::kInterpolatedKn;
    std::string line;
    std::uint64_t offset = 0;
    auto next_line = [&](std::string& out) {
      if (!std::getline(is, out)) return false;
      offset += out.size() + 1;
      if (!out.empty() && out.back() == '\r') out.pop_back();
      return true;
    };
    // locate \data\ header
    bool found = false;
    while (next_line(line))
      if (trim(line) == "\\data\\") {
        found = true;
        break;
      }
    if (!found) throw FormatError("ARPA header \\data\\ not found", offset);
    std::vector<std::uint64_t> declared;
    while (next_line(line)) {
      std::string t = trim(line);
      if (t.empty()) break;
      if (t.rfind("ngram ", 0) != 0) throw FormatError("malformed ARPA count line: " + t, offset);
      std::size_t eq = t.find('=');
      if (eq == std::string::npos) throw FormatError("malformed ARPA count line: " + t, offset);
      try {
        declared.push_back(std::stoull(t.substr(eq + 1)));
      } catch (const std::exception&) {
        throw FormatError("malformed ARPA count line: " + t, offset);
      }
    }
    if (declared.empty() || declared.size() > kMaxOrder)
      throw FormatError("ARPA order out of range", offset);
    m.order_ = static_cast<int>(declared.size());
    m.discounts_.resize(declared.size());
    m.tables_.resize(declared.size());

    for (int n = 1; n <= m.order_; ++n) {
      std::string expect = "\\" + std::to_string(n) + "-grams:";
      found = false;
      while (next_line(line)) {
        if (trim(line) == expect) {
          found = true;
          break;
        }
        if (!trim(line).empty()) throw FormatError("unexpected content before " + expect, offset);
      }
      if (!found) throw FormatError("missing ARPA section " + expect, offset);
      auto& table = m.tables_[static_cast<std::size_t>(n - 1)];
      for (std::uint64_t k = 0; k < declared[static_cast<std::size_t>(n - 1)]; ++k) {
        if (!next_line(line)) throw FormatError("truncated ARPA section " + expect, offset);
        std::vector<std::string> parts = split(line, '\t');
        if (parts.size() < 2 || parts.size() > 3)
          throw FormatError("malformed ARPA entry: " + line, offset);
        ProbBackoff pb;
        try {
          pb.ln_prob = std::stod(parts[0]) * ln10;
          if (parts.size() == 3) pb.ln_backoff = std::stod(parts[2]) * ln10;
        } catch (const std::exception&) {
          throw FormatError("malformed ARPA entry: " + line, offset);
        }
        std::vector<std::string> words = split(trim(parts[1]), ' ');
        if (static_cast<int>(words.size()) != n)
          throw FormatError("ARPA entry has wrong arity: " + line, offset);
        Gram g;
        g.len = static_cast<std::uint8_t>(n);
        for (int i = 0; i < n; ++i) g.ids[static_cast<std::size_t>(i)] = m.vocab_.add(words[static_cast<std::size_t>(i)]);
        table.emplace(g, pb);
      }
    }
    found = false;
    while (next_line(line))
      if (trim(line) == "\\end\\") {
        found = true;
        break;
      }
    if (!found) throw FormatError("ARPA file is truncated: missing \\end\\", offset);
    return m;
  }

 private:
  friend KNModel estimate(const NGramCounts&, std::uint64_t, Smoothing);

  static constexpr std::uint16_t kFormatVersion = 1;
  static constexpr double kMleFloorLog = -27.631021115928547;  // ln(1e-12)

  std::vector<std::pair<Gram, ProbBackoff>> sorted_rows(int n) const {
    const auto& t = table(n);
    std::vector<std::pair<Gram, ProbBackoff>> rows(t.begin(), t.end());
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return rows;
  }

  int order_ = 1;
  Smoothing smoothing_ = Smoothing::kInterpolatedKn;
  Vocab vocab_;
  std::vector<Discounts> discounts_;
  std::vector<GramMap<ProbBackoff>> tables_;
  std::vector<std::string> warnings_;
};

// ---------------------------------------------------------------------------
// Estimation: interpolated modified Kneser-Ney. Raw counts at the highest
// order; lower orders use continuation counts (number of distinct left
// extensions), except that grams beginning with <s> keep raw counts since
// nothing can precede them. Discounts come from the counts-of-counts of the
// counts actually used at each order and are clamped to [0, 0.999]; a
// degenerate histogram falls back to 0.75 with a warning.
// ---------------------------------------------------------------------------

inline KNModel estimate(const NGramCounts& raw, std::uint64_t min_count,
                        Smoothing smoothing = Smoothing::kInterpolatedKn) {
  const int order = raw.order();
  KNModel model;
  model.order_ = order;
  model.smoothing_ = smoothing;

  // Map rare tokens to <unk> and compact the vocabulary.
  std::vector<std::uint64_t> unigram_count(raw.vocab().size(), 0);
  for (const auto& [gram, count] : raw.table(1)) unigram_count[gram.first()] += count;
  std::vector<TokenId> remap(raw.vocab().size(), kUnkId);
  for (TokenId id = 0; id < raw.vocab().size(); ++id) {
    if (id <= kEosId) {
      remap[id] = id;
      continue;
    }
    if (unigram_count[id] >= min_count) remap[id] = model.vocab_.add(raw.vocab().token(id));
  }

  std::vector<GramMap<std::uint64_t>> counts(static_cast<std::size_t>(order));
  for (int n = 1; n <= order; ++n) {
    auto& dst = counts[static_cast<std::size_t>(n - 1)];
    dst.reserve(raw.table(n).size() * 2);
    for (const auto& [gram, count] : raw.table(n)) {
      Gram g = gram;
      for (std::uint8_t i = 0; i < g.len; ++i) g.ids[i] = remap[g.ids[i]];
      dst[g] += count;
    }
  }

  if (smoothing == Smoothing::kMle) {
    model.discounts_.resize(static_cast<std::size_t>(order));
    model.tables_.resize(static_cast<std::size_t>(order));
    for (int n = 1; n <= order; ++n) {
      GramMap<std::uint64_t> context_total;
      for (const auto& [gram, count] : counts[static_cast<std::size_t>(n - 1)])
        context_total[gram.prefix()] += count;
      auto& table = model.tables_[static_cast<std::size_t>(n - 1)];
      for (const auto& [gram, count] : counts[static_cast<std::size_t>(n - 1)]) {
        double p = static_cast<double>(count) / static_cast<double>(context_total[gram.prefix()]);
        table[gram].ln_prob = std::log(p);
      }
    }
    return model;
  }

  // Counts used per order: raw on top, continuation below (raw for <s>-initial).
  std::vector<GramMap<std::uint64_t>> used(static_cast<std::size_t>(order));
  used[static_cast<std::size_t>(order - 1)] = counts[static_cast<std::size_t>(order - 1)];
  for (int n = order - 1; n >= 1; --n) {
    auto& dst = used[static_cast<std::size_t>(n - 1)];
    for (const auto& [gram, count] : counts[static_cast<std::size_t>(n - 1)])
      if (gram.first() == kBosId) dst[gram] = count;
    for (const auto& [gram, count] : counts[static_cast<std::size_t>(n)]) {
      Gram s = gram.suffix();
      if (s.first() == kBosId) continue;
      ++dst[s];
    }
  }

  model.discounts_.resize(static_cast<std::size_t>(order));
  for (int n = 1; n <= order; ++n) {
    std::array<std::uint64_t, 4> cc{};  // counts-of-counts 1..4
    for (const auto& [gram, count] : used[static_cast<std::size_t>(n - 1)])
      if (count >= 1 && count <= 4) ++cc[count - 1];
    Discounts d;
    bool degenerate = cc[0] == 0 || cc[1] == 0;
    if (!degenerate) {
      double n1 = static_cast<double>(cc[0]), n2 = static_cast<double>(cc[1]);
      double n3 = static_cast<double>(cc[2]), n4 = static_cast<double>(cc[3]);
      double y = n1 / (n1 + 2.0 * n2);
      d.d1 = 1.0 - 2.0 * y * n2 / n1;
      d.d2 = 2.0 - 3.0 * y * n3 / n2;
      d.d3 = cc[2] > 0 ? 3.0 - 4.0 * y * n4 / n3 : 0.75;
      d.d1 = std::min(d.d1, 0.999);
      d.d2 = std::min(d.d2, 0.999);
      d.d3 = std::min(d.d3, 0.999);
      if (!(d.d1 > 0.0) || !(d.d2 > 0.0) || !(d.d3 > 0.0) || std::isnan(d.d1) ||
          std::isnan(d.d2) || std::isnan(d.d3))
        degenerate = true;
    }
    if (degenerate) {
      d = {0.75, 0.75, 0.75};
      model.warnings_.push_back("order-" + std::to_string(n) +
                                " counts-of-counts degenerate; using fixed discount 0.75");
    }
    model.discounts_[static_cast<std::size_t>(n - 1)] = d;
  }

  model.tables_.resize(static_cast<std::size_t>(order));
  const double vocab_size = static_cast<double>(model.vocab_.size());

  // Unigrams: every vocabulary token gets mass, interpolated with uniform.
  {
    const Discounts& d = model.discounts_[0];
    std::uint64_t total = 0;
    double discount_mass = 0.0;
    for (const auto& [gram, count] : used[0]) {
      total += count;
      discount_mass += d.for_count(count);
    }
    if (total == 0) throw DataError("degenerate language model: no unigram mass");
    double gamma = discount_mass / static_cast<double>(total);
    auto& table = model.tables_[0];
    for (TokenId id = 0; id < model.vocab_.size(); ++id) {
      Gram g;
      g.len = 1;
      g.ids[0] = id;
      auto it = used[0].find(g);
      double u = 0.0;
      if (it != used[0].end())
        u = (static_cast<double>(it->second) - d.for_count(it->second)) /
            static_cast<double>(total);
      table[g].ln_prob = std::log(u + gamma / vocab_size);
    }
  }

  for (int n = 2; n <= order; ++n) {
    const Discounts& d = model.discounts_[static_cast<std::size_t>(n - 1)];
    const auto& level = used[static_cast<std::size_t>(n - 1)];

    struct ContextAgg {
      std::uint64_t total = 0;
      std::uint64_t n1 = 0, n2 = 0, n3 = 0;
    };
    GramMap<ContextAgg> contexts;
    contexts.reserve(level.size() / 2 + 1);
    for (const auto& [gram, count] : level) {
      ContextAgg& agg = contexts[gram.prefix()];
      agg.total += count;
      if (count == 1) ++agg.n1;
      else if (count == 2) ++agg.n2;
      else ++agg.n3;
    }

    auto& table = model.tables_[static_cast<std::size_t>(n - 1)];
    table.reserve(level.size() * 2);
    for (const auto& [gram, count] : level) {
      const ContextAgg& agg = contexts.at(gram.prefix());
      double total = static_cast<double>(agg.total);
      double gamma = (d.d1 * static_cast<double>(agg.n1) + d.d2 * static_cast<double>(agg.n2) +
                      d.d3 * static_cast<double>(agg.n3)) /
                     total;
      double u = (static_cast<double>(count) - d.for_count(count)) / total;
      Gram lower = gram.suffix();
      double p_lower = std::exp(model.log_prob_ids(
          {lower.ids.data(), static_cast<std::size_t>(lower.len - 1)}, lower.last()));
      table[gram].ln_prob = std::log(u + gamma * p_lower);
    }

    // Backoff weights live on the context gram one order down. A context made
    // entirely of <s> has no row of its own yet; give it one that scores the
    // same as its backed-off value so distributions still sum to one.
    for (const auto& [context, agg] : contexts) {
      double total = static_cast<double>(agg.total);
      double gamma = (d.d1 * static_cast<double>(agg.n1) + d.d2 * static_cast<double>(agg.n2) +
                      d.d3 * static_cast<double>(agg.n3)) /
                     total;
      auto& lower_table = model.tables_[static_cast<std::size_t>(n - 2)];
      auto it = lower_table.find(context);
      if (it == lower_table.end()) {
        ProbBackoff pb;
        pb.ln_prob = model.log_prob_ids(
            {context.ids.data(), static_cast<std::size_t>(context.len - 1)}, context.last());
        it = lower_table.emplace(context, pb).first;
      }
      it->second.ln_backoff = std::log(gamma);
    }
  }
  return model;
}

inline KNModel train_model(const std::vector<text::TokenSequence>& sentences, int order,
                           std::uint64_t min_count, Smoothing smoothing = Smoothing::kInterpolatedKn) {
  return estimate(count_ngrams(sentences, order), min_count, smoothing);
}

}  // namespace engage::lm

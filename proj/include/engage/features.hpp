#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "engage/common.hpp"
#include "engage/corpus.hpp"
#include "engage/csv.hpp"
#include "engage/ngram_lm.hpp"
#include "engage/text.hpp"

namespace engage::features {

// ---------------------------------------------------------------------------
// Lexicons
// ---------------------------------------------------------------------------

// One category word list. Entries ending in '*' match token prefixes.
struct Lexicon {
  std::string name;
  std::unordered_set<std::string> exact;
  std::vector<std::string> prefixes;

  bool matches(std::string_view token) const {
    if (exact.count(std::string(token))) return true;
    for (const std::string& p : prefixes)
      if (token.size() >= p.size() && token.substr(0, p.size()) == p) return true;
    return false;
  }
};

inline Lexicon parse_lexicon(std::istream& is, std::string name) {
  Lexicon lex;
  lex.name = std::move(name);
  std::string line;
  while (std::getline(is, line)) {
    std::string entry = to_lower_ascii(trim(line));
    if (entry.empty()) continue;
    if (entry.back() == '*') {
      entry.pop_back();
      if (entry.empty()) throw DataError("lexicon " + lex.name + " has a bare '*' entry");
      lex.prefixes.push_back(entry);
    } else {
      lex.exact.insert(entry);
    }
  }
  if (lex.exact.empty() && lex.prefixes.empty())
    throw DataError("lexicon " + lex.name + " is empty");
  std::sort(lex.prefixes.begin(), lex.prefixes.end());
  return lex;
}

inline Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is.good()) throw DataError("cannot open lexicon file " + path.string());
  return parse_lexicon(is, path.stem().string());
}

// Loads every *.txt in the directory; category name is the file stem.
inline std::vector<Lexicon> load_lexicon_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw DataError("lexicon directory not found: " + dir.string());
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw DataError("no lexicon files in " + dir.string());
  std::vector<Lexicon> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(load_lexicon(p));
  return out;
}

struct LexiconScores {
  std::uint64_t word_count = 0;  // tokens excluding punctuation
  std::vector<double> proportions;  // aligned with the lexicon list
};

inline LexiconScores score_lexicon(const text::TokenSequence& tokens,
                                   const std::vector<Lexicon>& lexicons) {
  LexiconScores scores;
  scores.proportions.assign(lexicons.size(), 0.0);
  if (tokens.empty()) return scores;
  for (const std::string& tok : tokens) {
    if (!text::is_punct_token(tok)) ++scores.word_count;
    for (std::size_t k = 0; k < lexicons.size(); ++k)
      if (lexicons[k].matches(tok)) scores.proportions[k] += 1.0;
  }
  for (double& p : scores.proportions) p /= static_cast<double>(tokens.size());
  return scores;
}

inline std::optional<std::size_t> lexicon_index(const std::vector<Lexicon>& lexicons,
                                                std::string_view name) {
  for (std::size_t k = 0; k < lexicons.size(); ++k)
    if (lexicons[k].name == name) return k;
  return std::nullopt;
}

// Proxy summary scores, not the proprietary LIWC regressions:
//   tone  = posemo - negemo
//   clout = (we + social) - (i + negate)
inline std::pair<double, double> summary_scores(const std::vector<Lexicon>& lexicons,
                                                const LexiconScores& scores) {
  auto get = [&](std::string_view name) {
    auto idx = lexicon_index(lexicons, name);
    return idx ? scores.proportions[*idx] : 0.0;
  };
  double tone = get("posemo") - get("negemo");
  double clout = (get("we") + get("social")) - (get("i") + get("negate"));
  return {tone, clout};
}

// ---------------------------------------------------------------------------
// Dialogue tags
// ---------------------------------------------------------------------------

enum class DialogueTag : std::uint8_t {
  kStatement = 0,
  kQuestion,
  kAppreciation,
  kResponse,
  kSuggestion
};
constexpr std::size_t kDialogueTagCount = 5;

inline std::string_view dialogue_tag_name(DialogueTag t) {
  switch (t) {
    case DialogueTag::kStatement: return "statement";
    case DialogueTag::kQuestion: return "question";
    case DialogueTag::kAppreciation: return "appreciation";
    case DialogueTag::kResponse: return "response";
    case DialogueTag::kSuggestion: return "suggestion";
  }
  return "statement";
}

inline std::optional<DialogueTag> dialogue_tag_from_name(std::string_view name) {
  std::string n = to_lower_ascii(trim(name));
  for (std::size_t k = 0; k < kDialogueTagCount; ++k) {
    DialogueTag t = static_cast<DialogueTag>(k);
    if (n == dialogue_tag_name(t)) return t;
  }
  return std::nullopt;
}

namespace detail {

inline bool has_token(const text::TokenSequence& tokens, std::string_view t) {
  for (const std::string& tok : tokens)
    if (tok == t) return true;
  return false;
}

inline bool has_phrase(const text::TokenSequence& tokens,
                       std::initializer_list<std::string_view> phrase) {
  if (phrase.size() == 0 || tokens.size() < phrase.size()) return false;
  for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
    bool match = true;
    std::size_t k = 0;
    for (std::string_view w : phrase) {
      if (tokens[i + k] != w) {
        match = false;
        break;
      }
      ++k;
    }
    if (match) return true;
  }
  return false;
}

inline bool starts_with_phrase(const text::TokenSequence& tokens,
                               std::initializer_list<std::string_view> phrase) {
  if (tokens.size() < phrase.size()) return false;
  std::size_t k = 0;
  for (std::string_view w : phrase) {
    if (tokens[k] != w) return false;
    ++k;
  }
  return true;
}

inline const std::unordered_set<std::string>& gratitude_tokens() {
  static const std::unordered_set<std::string> set = {
      "thanks", "thank", "thankyou", "thx", "ty", "appreciate", "appreciated",
      "appreciation", "grateful", "thankful"};
  return set;
}

inline const std::unordered_set<std::string>& question_openers() {
  static const std::unordered_set<std::string> set = {
      "what", "who",  "whom", "whose", "when",  "where", "why",  "how",   "which",
      "is",   "are",  "was",  "were",  "am",    "do",    "does", "did",   "can",
      "could", "would", "will", "shall", "should", "may", "might", "have", "has", "had"};
  return set;
}

inline const std::unordered_set<std::string>& imperative_openers() {
  static const std::unordered_set<std::string> set = {
      "please", "visit", "check", "click", "see", "follow", "dm",
      "contact", "send",  "submit", "answer", "share", "go", "head"};
  return set;
}

}  // namespace detail

// First matching rule wins: APPRECIATION -> QUESTION -> SUGGESTION ->
// RESPONSE -> STATEMENT. Expects normalized, tokenized input.
inline DialogueTag tag_dialogue(const text::TokenSequence& tokens) {
  using namespace detail;
  if (tokens.empty()) return DialogueTag::kStatement;

  for (const std::string& tok : tokens)
    if (gratitude_tokens().count(tok)) return DialogueTag::kAppreciation;

  if (has_token(tokens, "?") || question_openers().count(tokens.front()))
    return DialogueTag::kQuestion;

  bool suggests = has_phrase(tokens, {"would", "you", "mind"}) ||
                  has_phrase(tokens, {"you", "could"}) || has_token(tokens, "try") ||
                  has_phrase(tokens, {"help", "us", "improve"}) ||
                  (has_token(tokens, "<url>") && imperative_openers().count(tokens.front()));
  if (suggests) return DialogueTag::kSuggestion;

  bool responds = starts_with_phrase(tokens, {"not", "a", "problem"}) ||
                  starts_with_phrase(tokens, {"you're", "welcome"}) ||
                  starts_with_phrase(tokens, {"no", "worries"}) ||
                  starts_with_phrase(tokens, {"glad"}) ||
                  starts_with_phrase(tokens, {"happy", "to", "help"}) ||
                  starts_with_phrase(tokens, {"anytime"}) ||
                  starts_with_phrase(tokens, {"my", "pleasure"}) ||
                  starts_with_phrase(tokens, {"our", "pleasure"});
  if (responds) return DialogueTag::kResponse;

  return DialogueTag::kStatement;
}

// ---------------------------------------------------------------------------
// Empathy heuristics (stand-in for the external empathy scorer; external
// scores can override these per conversation)
// ---------------------------------------------------------------------------

struct EmpathyScores {
  int emotional_reaction = 0;  // 0 none, 1 weak, 2 strong
  int interpretation = 0;
  int exploration = 0;
};

namespace detail {

inline const std::unordered_set<std::string>& emotion_tokens() {
  static const std::unordered_set<std::string> set = {
      "sorry",   "apologies", "apologize", "apologise", "apology", "sad",
      "awful",   "terrible",  "horrible",  "frustrating", "unfortunate",
      "regret",  "ouch"};
  return set;
}

inline bool feeling_frame(const text::TokenSequence& t) {
  return has_phrase(t, {"i'm", "sorry"}) || has_phrase(t, {"im", "sorry"}) ||
         has_phrase(t, {"i", "am", "sorry"}) || has_phrase(t, {"we're", "sorry"}) ||
         has_phrase(t, {"we", "are", "sorry"}) || has_phrase(t, {"so", "sorry"}) ||
         has_phrase(t, {"very", "sorry"}) || has_phrase(t, {"sorry", "to", "hear"}) ||
         has_phrase(t, {"sorry", "to", "see"}) || has_phrase(t, {"hate", "to", "hear"}) ||
         has_phrase(t, {"hate", "to", "see"}) || has_phrase(t, {"we", "hate"}) ||
         has_phrase(t, {"i", "feel"}) || has_phrase(t, {"we", "feel"}) ||
         has_phrase(t, {"that", "sounds"}) || has_phrase(t, {"sad", "to", "hear"});
}

inline bool understanding_frame(const text::TokenSequence& t) {
  return has_phrase(t, {"i", "understand"}) || has_phrase(t, {"we", "understand"}) ||
         has_phrase(t, {"i", "know", "how"}) || has_phrase(t, {"we", "know", "how"}) ||
         has_phrase(t, {"i've", "had"}) || has_phrase(t, {"i", "have", "had"}) ||
         has_phrase(t, {"i", "see", "what"}) || has_phrase(t, {"i", "can", "see"}) ||
         has_phrase(t, {"totally", "understand"}) ||
         has_phrase(t, {"completely", "understand"}) || has_token(t, "understood") ||
         has_phrase(t, {"i", "get", "it"}) || has_phrase(t, {"we", "get", "it"}) ||
         has_phrase(t, {"i", "hear", "you"});
}

inline const std::unordered_set<std::string>& overlap_stopwords() {
  static const std::unordered_set<std::string> set = {
      "the",   "a",     "an",    "and",   "or",    "but",   "if",     "is",    "are",
      "was",   "were",  "am",    "be",    "been",  "being", "to",     "of",    "in",
      "on",    "at",    "by",    "for",   "with",  "from",  "as",     "it",    "its",
      "it's",  "this",  "that",  "these", "those", "i",     "we",     "you",   "he",
      "she",   "they",  "me",    "us",    "him",   "her",   "them",   "my",    "our",
      "your",  "his",   "their", "do",    "does",  "did",   "have",   "has",   "had",
      "can",   "could", "will",  "would", "shall", "should", "may",   "might", "must",
      "not",   "no",    "yes",   "so",    "too",   "very",  "just",   "please", "hi",
      "hello", "hey",   "there", "here",  "what",  "when",  "where",  "why",   "how",
      "who",   "which", "im",    "i'm",   "we're", "you're", "i've",  "we've", "i'll",
      "we'll", "about", "into",  "out",   "up",    "down",  "again",  "then",  "than",
      "now",   "also",  "any",   "all",   "some",  "more",  "most",   "get",   "got",
      "let",   "know",  "see",   "thanks", "thank", "need",  "want",  "us"};
  return set;
}

inline bool is_content_token(std::string_view tok) {
  return !text::is_punct_token(tok) && !text::is_placeholder_token(tok) &&
         !overlap_stopwords().count(std::string(tok));
}

inline std::size_t content_overlap(const text::TokenSequence& a, const text::TokenSequence& b) {
  std::unordered_set<std::string> set;
  for (const std::string& tok : a)
    if (is_content_token(tok)) set.insert(tok);
  std::unordered_set<std::string> seen;
  for (const std::string& tok : b)
    if (set.count(tok) && !seen.count(tok)) seen.insert(tok);
  return seen.size();
}

inline const std::unordered_set<std::string>& issue_nouns() {
  static const std::unordered_set<std::string> set = {"error", "version", "device", "order",
                                                      "account"};
  return set;
}

}  // namespace detail

inline EmpathyScores score_empathy(const text::TokenSequence& customer_post,
                                   const text::TokenSequence& brand_post) {
  using namespace detail;
  EmpathyScores scores;

  bool frame = feeling_frame(brand_post);
  bool bare = false;
  for (const std::string& tok : brand_post)
    if (emotion_tokens().count(tok)) {
      bare = true;
      break;
    }
  scores.emotional_reaction = frame ? 2 : (bare ? 1 : 0);

  if (understanding_frame(brand_post))
    scores.interpretation = content_overlap(customer_post, brand_post) >= 2 ? 2 : 1;

  if (tag_dialogue(brand_post) == DialogueTag::kQuestion) {
    bool specific = content_overlap(customer_post, brand_post) >= 1;
    if (!specific)
      for (const std::string& tok : brand_post)
        if (issue_nouns().count(tok)) {
          specific = true;
          break;
        }
    scores.exploration = specific ? 2 : 1;
  }
  return scores;
}

// ---------------------------------------------------------------------------
// TF-IDF over unigrams and bigrams
// ---------------------------------------------------------------------------

struct TfIdfVocabulary {
  struct Entry {
    std::uint32_t index;
    double idf;
  };
  std::unordered_map<std::string, Entry> terms;
  std::uint64_t document_count = 0;
  std::uint32_t min_df = 1;

  std::size_t size() const { return terms.size(); }
};

namespace detail {

template <typename Fn>
void for_each_term(const text::TokenSequence& doc, Fn&& fn) {
  for (const std::string& tok : doc) fn(tok);
  for (std::size_t i = 0; i + 1 < doc.size(); ++i) fn(doc[i] + " " + doc[i + 1]);
}

}  // namespace detail

// Vocabulary of unigrams+bigrams with document frequency >= min_df, keeping
// the top max_features by df; idf(t) = ln((1+D)/(1+df)) + 1.
inline TfIdfVocabulary fit_tfidf(const std::vector<text::TokenSequence>& documents,
                                 std::uint32_t min_df, std::size_t max_features) {
  if (documents.empty()) throw DataError("cannot fit tf-idf on an empty corpus");
  if (max_features == 0) throw UsageError("max_features must be positive");
  std::unordered_map<std::string, std::uint64_t> df;
  std::unordered_set<std::string> in_doc;
  for (const text::TokenSequence& doc : documents) {
    in_doc.clear();
    detail::for_each_term(doc, [&](const std::string& term) { in_doc.insert(term); });
    for (const std::string& term : in_doc) ++df[term];
  }

  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [term, count] : df)
    if (count >= min_df) kept.emplace_back(term, count);
  if (kept.size() > max_features) {
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    kept.resize(max_features);
  }
  std::sort(kept.begin(), kept.end());  // stable lexicographic index assignment

  TfIdfVocabulary vocab;
  vocab.document_count = documents.size();
  vocab.min_df = min_df;
  double d = static_cast<double>(documents.size());
  for (std::uint32_t i = 0; i < kept.size(); ++i) {
    double idf = std::log((1.0 + d) / (1.0 + static_cast<double>(kept[i].second))) + 1.0;
    vocab.terms.emplace(kept[i].first, TfIdfVocabulary::Entry{i, idf});
  }
  return vocab;
}

// tf*idf, L2-normalized; returns (index, value) sorted by index.
inline std::vector<std::pair<std::uint32_t, double>> transform_tfidf(
    const text::TokenSequence& doc, const TfIdfVocabulary& vocab) {
  std::unordered_map<std::uint32_t, double> acc;
  detail::for_each_term(doc, [&](const std::string& term) {
    auto it = vocab.terms.find(term);
    if (it != vocab.terms.end()) acc[it->second.index] += it->second.idf;
  });
  std::vector<std::pair<std::uint32_t, double>> out(acc.begin(), acc.end());
  std::sort(out.begin(), out.end());
  double norm_sq = 0.0;
  for (const auto& [idx, v] : out) norm_sq += v * v;
  if (norm_sq > 0.0) {
    double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& [idx, v] : out) v *= inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// External score overrides
// ---------------------------------------------------------------------------

struct ScoreOverride {
  std::optional<int> er, ip, ex;
  std::optional<DialogueTag> tag_customer, tag_brand;
};

struct ExternalScores {
  std::unordered_map<std::string, ScoreOverride> by_conversation;
  std::uint64_t rejected_rows = 0;

  std::uint64_t count_unknown_ids(const std::unordered_set<std::string>& known) const {
    std::uint64_t unknown = 0;
    for (const auto& [id, ov] : by_conversation)
      if (!known.count(id)) ++unknown;
    return unknown;
  }
};

inline ExternalScores load_external_scores(std::istream& is) {
  csv::Reader reader(is);
  std::vector<std::string> header;
  if (!reader.read_record(header)) throw DataError("external scores file is empty");
  std::unordered_map<std::string, std::size_t> cols;
  for (std::size_t i = 0; i < header.size(); ++i) cols[to_lower_ascii(trim(header[i]))] = i;
  if (!cols.count("conversation_id"))
    throw DataError("external scores file is missing the conversation_id column");

  static const std::vector<std::string> level_cols = {"er", "ip", "ex"};
  static const std::vector<std::string> tag_cols = {"tag_customer", "tag_brand"};

  ExternalScores scores;
  std::vector<std::string> fields;
  while (reader.read_record(fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != header.size()) {
      ++scores.rejected_rows;
      continue;
    }
    std::string id = trim(fields[cols["conversation_id"]]);
    if (id.empty()) {
      ++scores.rejected_rows;
      continue;
    }
    ScoreOverride ov;
    bool bad = false;
    for (const std::string& name : level_cols) {
      auto it = cols.find(name);
      if (it == cols.end()) continue;
      std::string value = trim(fields[it->second]);
      if (value.empty()) continue;
      if (value != "0" && value != "1" && value != "2") {
        bad = true;
        break;
      }
      int level = value[0] - '0';
      if (name == "er") ov.er = level;
      else if (name == "ip") ov.ip = level;
      else ov.ex = level;
    }
    if (!bad)
      for (const std::string& name : tag_cols) {
        auto it = cols.find(name);
        if (it == cols.end()) continue;
        std::string value = trim(fields[it->second]);
        if (value.empty()) continue;
        auto tag = dialogue_tag_from_name(value);
        if (!tag) {
          bad = true;
          break;
        }
        if (name == "tag_customer") ov.tag_customer = *tag;
        else ov.tag_brand = *tag;
      }
    if (bad) {
      ++scores.rejected_rows;
      continue;
    }
    scores.by_conversation[id] = ov;
  }
  return scores;
}

inline ExternalScores load_external_scores(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good()) throw DataError("cannot open external scores file " + path.string());
  return load_external_scores(is);
}

// ---------------------------------------------------------------------------
// Feature assembly
// ---------------------------------------------------------------------------

enum class FeatureGroup : std::uint8_t { kCp = 0, kBap, kLiwc, kEmpathy, kPerplexity, kDialogue };
constexpr std::size_t kFeatureGroupCount = 6;

inline std::string_view feature_group_name(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::kCp: return "cp";
    case FeatureGroup::kBap: return "bap";
    case FeatureGroup::kLiwc: return "liwc";
    case FeatureGroup::kEmpathy: return "empathy";
    case FeatureGroup::kPerplexity: return "perplexity";
    case FeatureGroup::kDialogue: return "dialogue";
  }
  return "cp";
}

inline std::optional<FeatureGroup> feature_group_from_name(std::string_view name) {
  std::string n = to_lower_ascii(trim(name));
  for (std::size_t k = 0; k < kFeatureGroupCount; ++k) {
    FeatureGroup g = static_cast<FeatureGroup>(k);
    if (n == feature_group_name(g)) return g;
  }
  return std::nullopt;
}

inline std::set<FeatureGroup> all_feature_groups() {
  std::set<FeatureGroup> all;
  for (std::size_t k = 0; k < kFeatureGroupCount; ++k) all.insert(static_cast<FeatureGroup>(k));
  return all;
}

inline std::set<FeatureGroup> parse_toggles(std::string_view csv_list) {
  std::set<FeatureGroup> toggles;
  for (const std::string& part : split(csv_list, ',')) {
    if (trim(part).empty()) continue;
    auto g = feature_group_from_name(part);
    if (!g) throw UsageError("unknown feature group '" + trim(part) + "'");
    toggles.insert(*g);
  }
  if (toggles.empty()) throw UsageError("feature toggles must name at least one group");
  return toggles;
}

inline std::string format_toggles(const std::set<FeatureGroup>& toggles) {
  std::string out;
  for (FeatureGroup g : toggles) {
    if (!out.empty()) out += ",";
    out += feature_group_name(g);
  }
  return out;
}

struct StyleScores {
  LexiconScores customer_liwc, brand_liwc;
  double customer_tone = 0, customer_clout = 0;
  double brand_tone = 0, brand_clout = 0;
  DialogueTag tag_customer = DialogueTag::kStatement;
  DialogueTag tag_brand = DialogueTag::kStatement;
  EmpathyScores empathy;
  double brand_perplexity = 1.0;  // raw PPL; enters the model as ln(PPL)
};

// Fitted artifacts plus the index layout for one toggle configuration.
// Indices are stable for a given (vocabularies, lexicons, toggles) triple.
class FeatureSpace {
 public:
  FeatureSpace(TfIdfVocabulary customer_vocab, TfIdfVocabulary brand_vocab,
               std::vector<Lexicon> lexicons, const lm::KNModel* model,
               std::set<FeatureGroup> toggles, text::NormalizationConfig norm = {})
      : customer_vocab_(std::move(customer_vocab)),
        brand_vocab_(std::move(brand_vocab)),
        lexicons_(std::move(lexicons)),
        lm_(model),
        toggles_(std::move(toggles)),
        norm_(norm) {
    if (toggles_.empty()) throw UsageError("feature toggles must name at least one group");
    if (toggles_.count(FeatureGroup::kPerplexity) && lm_ == nullptr)
      throw UsageError("perplexity group enabled but no language model provided");
    build_layout();
  }

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<FeatureGroup>& groups() const { return groups_; }
  std::size_t dimension() const { return names_.size(); }
  const std::set<FeatureGroup>& toggles() const { return toggles_; }
  const std::vector<Lexicon>& lexicons() const { return lexicons_; }
  const TfIdfVocabulary& customer_vocab() const { return customer_vocab_; }
  const TfIdfVocabulary& brand_vocab() const { return brand_vocab_; }
  const text::NormalizationConfig& norm() const { return norm_; }
  const lm::KNModel* model() const { return lm_; }

  bool enabled(FeatureGroup g) const { return toggles_.count(g) > 0; }
  std::uint32_t offset(FeatureGroup g) const { return offsets_[static_cast<std::size_t>(g)]; }

  // Dense (non TF-IDF) indices, the ones standardization applies to.
  std::vector<std::uint32_t> dense_indices() const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < groups_.size(); ++i)
      if (groups_[i] != FeatureGroup::kCp && groups_[i] != FeatureGroup::kBap) out.push_back(i);
    return out;
  }

  StyleScores style_scores(const corpus::Conversation& conv,
                           const ExternalScores* overrides = nullptr) const {
    StyleScores style;
    text::TokenSequence customer = tokens_of(conv.root_tweet().text);
    text::TokenSequence brand = tokens_of(conv.initial_brand_tweet().text);

    style.customer_liwc = score_lexicon(customer, lexicons_);
    style.brand_liwc = score_lexicon(brand, lexicons_);
    std::tie(style.customer_tone, style.customer_clout) =
        summary_scores(lexicons_, style.customer_liwc);
    std::tie(style.brand_tone, style.brand_clout) = summary_scores(lexicons_, style.brand_liwc);
    style.tag_customer = tag_dialogue(customer);
    style.tag_brand = tag_dialogue(brand);
    style.empathy = score_empathy(customer, brand);
    if (lm_ != nullptr) style.brand_perplexity = brand_perplexity(brand);

    if (overrides != nullptr) {
      auto it = overrides->by_conversation.find(conv.conversation_id);
      if (it != overrides->by_conversation.end()) {
        const ScoreOverride& ov = it->second;
        if (ov.er) style.empathy.emotional_reaction = *ov.er;
        if (ov.ip) style.empathy.interpretation = *ov.ip;
        if (ov.ex) style.empathy.exploration = *ov.ex;
        if (ov.tag_customer) style.tag_customer = *ov.tag_customer;
        if (ov.tag_brand) style.tag_brand = *ov.tag_brand;
      }
    }
    return style;
  }

  text::TokenSequence tokens_of(const std::string& raw) const {
    return text::tokenize(text::normalize(raw, norm_));
  }

 private:
  friend struct Assembler;

  double brand_perplexity(const text::TokenSequence& brand) const {
    if (!brand.empty()) return lm_->perplexity(brand).value;
    // degenerate post: score just the end-of-sentence transition
    std::vector<std::string> context(static_cast<std::size_t>(lm_->order() - 1), "<s>");
    return std::exp(-lm_->log_prob(context, "</s>"));
  }

  void build_layout() {
    auto add = [&](FeatureGroup g, std::string name) {
      names_.push_back(std::move(name));
      groups_.push_back(g);
    };
    offsets_.assign(kFeatureGroupCount, 0);

    if (enabled(FeatureGroup::kCp)) {
      offsets_[static_cast<std::size_t>(FeatureGroup::kCp)] = static_cast<std::uint32_t>(names_.size());
      append_vocab_names(FeatureGroup::kCp, "CP: ", customer_vocab_);
    }
    if (enabled(FeatureGroup::kBap)) {
      offsets_[static_cast<std::size_t>(FeatureGroup::kBap)] = static_cast<std::uint32_t>(names_.size());
      append_vocab_names(FeatureGroup::kBap, "BAP: ", brand_vocab_);
    }
    if (enabled(FeatureGroup::kLiwc)) {
      offsets_[static_cast<std::size_t>(FeatureGroup::kLiwc)] = static_cast<std::uint32_t>(names_.size());
      for (std::string_view side : {"CUSTOMER", "BRAND"}) {
        add(FeatureGroup::kLiwc, std::string(side) + ": word_count");
        for (const Lexicon& lex : lexicons_) add(FeatureGroup::kLiwc, std::string(side) + ": " + lex.name);
        add(FeatureGroup::kLiwc, std::string(side) + ": tone");
        add(FeatureGroup::kLiwc, std::string(side) + ": clout");
      }
    }
    if (enabled(FeatureGroup::kEmpathy)) {
      offsets_[static_cast<std::size_t>(FeatureGroup::kEmpathy)] = static_cast<std::uint32_t>(names_.size());
      add(FeatureGroup::kEmpathy, "empathy: emotional_reactions");
      add(FeatureGroup::kEmpathy, "empathy: interpretations");
      add(FeatureGroup::kEmpathy, "empathy: explorations");
    }
    if (enabled(FeatureGroup::kPerplexity)) {
      offsets_[static_cast<std::size_t>(FeatureGroup::kPerplexity)] = static_cast<std::uint32_t>(names_.size());
      add(FeatureGroup::kPerplexity, "BRAND: novelty");
    }
    if (enabled(FeatureGroup::kDialogue)) {
      offsets_[static_cast<std::size_t>(FeatureGroup::kDialogue)] = static_cast<std::uint32_t>(names_.size());
      for (std::string_view side : {"CUSTOMER", "BRAND"})
        for (std::size_t k = 0; k < kDialogueTagCount; ++k)
          add(FeatureGroup::kDialogue,
              std::string(side) + ": " + std::string(dialogue_tag_name(static_cast<DialogueTag>(k))));
    }
  }

  void append_vocab_names(FeatureGroup g, std::string_view prefix, const TfIdfVocabulary& vocab) {
    std::vector<std::string> by_index(vocab.size());
    for (const auto& [term, entry] : vocab.terms) by_index[entry.index] = term;
    for (std::string& term : by_index) {
      names_.push_back(std::string(prefix) + term);
      groups_.push_back(g);
    }
  }

  TfIdfVocabulary customer_vocab_, brand_vocab_;
  std::vector<Lexicon> lexicons_;
  const lm::KNModel* lm_;
  std::set<FeatureGroup> toggles_;
  text::NormalizationConfig norm_;

  std::vector<std::string> names_;
  std::vector<FeatureGroup> groups_;
  std::vector<std::uint32_t> offsets_;
};

struct Example {
  std::string conversation_id;
  std::vector<std::pair<std::uint32_t, double>> features;  // sorted by index
  bool label = false;
};

// Builds the feature vector for one conversation. TF-IDF blocks are sparse;
// stylistic blocks emit every coordinate so standardization stays well
// defined downstream.
inline Example assemble(const corpus::Conversation& conv, const FeatureSpace& space,
                        const ExternalScores* overrides = nullptr) {
  if (!conv.has_brand_turn())
    throw DataError("conversation " + conv.conversation_id +
                    " has no brand turn; it must be filtered before featurization");
  Example ex;
  ex.conversation_id = conv.conversation_id;
  ex.label = corpus::label_engagement(conv).engaged;

  if (space.enabled(FeatureGroup::kCp)) {
    text::TokenSequence customer = space.tokens_of(conv.root_tweet().text);
    std::uint32_t base = space.offset(FeatureGroup::kCp);
    for (const auto& [idx, v] : transform_tfidf(customer, space.customer_vocab()))
      ex.features.emplace_back(base + idx, v);
  }
  if (space.enabled(FeatureGroup::kBap)) {
    text::TokenSequence brand = space.tokens_of(conv.initial_brand_tweet().text);
    std::uint32_t base = space.offset(FeatureGroup::kBap);
    for (const auto& [idx, v] : transform_tfidf(brand, space.brand_vocab()))
      ex.features.emplace_back(base + idx, v);
  }

  bool needs_style = space.enabled(FeatureGroup::kLiwc) || space.enabled(FeatureGroup::kEmpathy) ||
                     space.enabled(FeatureGroup::kPerplexity) ||
                     space.enabled(FeatureGroup::kDialogue);
  if (needs_style) {
    StyleScores style = space.style_scores(conv, overrides);
    if (space.enabled(FeatureGroup::kLiwc)) {
      std::uint32_t i = space.offset(FeatureGroup::kLiwc);
      for (const LexiconScores* side : {&style.customer_liwc, &style.brand_liwc}) {
        ex.features.emplace_back(i++, static_cast<double>(side->word_count));
        for (double p : side->proportions) ex.features.emplace_back(i++, p);
        if (side == &style.customer_liwc) {
          ex.features.emplace_back(i++, style.customer_tone);
          ex.features.emplace_back(i++, style.customer_clout);
        } else {
          ex.features.emplace_back(i++, style.brand_tone);
          ex.features.emplace_back(i++, style.brand_clout);
        }
      }
    }
    if (space.enabled(FeatureGroup::kEmpathy)) {
      std::uint32_t i = space.offset(FeatureGroup::kEmpathy);
      ex.features.emplace_back(i, static_cast<double>(style.empathy.emotional_reaction));
      ex.features.emplace_back(i + 1, static_cast<double>(style.empathy.interpretation));
      ex.features.emplace_back(i + 2, static_cast<double>(style.empathy.exploration));
    }
    if (space.enabled(FeatureGroup::kPerplexity)) {
      ex.features.emplace_back(space.offset(FeatureGroup::kPerplexity),
                               std::log(style.brand_perplexity));
    }
    if (space.enabled(FeatureGroup::kDialogue)) {
      std::uint32_t i = space.offset(FeatureGroup::kDialogue);
      for (std::size_t k = 0; k < kDialogueTagCount; ++k)
        ex.features.emplace_back(i++, style.tag_customer == static_cast<DialogueTag>(k) ? 1.0 : 0.0);
      for (std::size_t k = 0; k < kDialogueTagCount; ++k)
        ex.features.emplace_back(i++, style.tag_brand == static_cast<DialogueTag>(k) ? 1.0 : 0.0);
    }
  }

  for (const auto& [idx, v] : ex.features)
    if (!std::isfinite(v))
      throw DataError("non-finite feature value for conversation " + conv.conversation_id);
  return ex;
}

}  // namespace engage::features

#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "engage/common.hpp"
#include "engage/corpus.hpp"
#include "engage/csv.hpp"
#include "engage/eval.hpp"
#include "engage/features.hpp"
#include "engage/model.hpp"
#include "engage/ngram_lm.hpp"
#include "engage/synth.hpp"
#include "engage/text.hpp"

namespace engage::pipeline {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration: INI-style file ([section] + key = value) overridden by flags.
// ---------------------------------------------------------------------------

struct PipelineConfig {
  std::string corpus_path;
  std::string lexicon_dir = "data/lexicons";
  std::string external_scores_path;  // optional
  std::string out_dir = "runs/default";

  double train_fraction = 0.6;
  double lm_fraction = 0.1;
  std::uint64_t seed = 42;

  int lm_order = 5;
  std::uint64_t lm_min_count = 2;

  std::uint32_t tfidf_min_df = 5;
  std::size_t tfidf_max_features = 50000;

  model::TrainConfig train;
  std::set<features::FeatureGroup> toggles = features::all_feature_groups();
  text::NormalizationConfig norm;

  void validate() const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw UsageError("split.train_fraction must lie in (0, 1)");
    if (!(lm_fraction >= 0.0 && lm_fraction < 1.0))
      throw UsageError("split.lm_fraction must lie in [0, 1)");
    if (toggles.empty()) throw UsageError("features.toggles must name at least one group");
    train.validate();
    norm.validate();
  }
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& value) {
  std::string v = to_lower_ascii(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("config key " + key + " expects a boolean, got '" + value + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  try {
    if constexpr (std::is_floating_point_v<T>) return static_cast<T>(std::stod(value));
    else if constexpr (std::is_signed_v<T>) return static_cast<T>(std::stoll(value));
    else return static_cast<T>(std::stoull(value));
  } catch (const std::exception&) {
    throw UsageError("config key " + key + " expects a number, got '" + value + "'");
  }
}

}  // namespace detail

inline void apply_config_entry(PipelineConfig& config, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  using detail::parse_number;
  if (key == "paths.corpus") config.corpus_path = value;
  else if (key == "paths.lexicons") config.lexicon_dir = value;
  else if (key == "paths.external_scores") config.external_scores_path = value;
  else if (key == "paths.out") config.out_dir = value;
  else if (key == "split.train_fraction") config.train_fraction = parse_number<double>(key, value);
  else if (key == "split.lm_fraction") config.lm_fraction = parse_number<double>(key, value);
  else if (key == "split.seed") config.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "lm.order") config.lm_order = parse_number<int>(key, value);
  else if (key == "lm.min_count") config.lm_min_count = parse_number<std::uint64_t>(key, value);
  else if (key == "tfidf.min_df") config.tfidf_min_df = parse_number<std::uint32_t>(key, value);
  else if (key == "tfidf.max_features") config.tfidf_max_features = parse_number<std::size_t>(key, value);
  else if (key == "train.l2") config.train.l2_strength = parse_number<double>(key, value);
  else if (key == "train.learning_rate") config.train.learning_rate = parse_number<double>(key, value);
  else if (key == "train.max_epochs") config.train.max_epochs = parse_number<std::uint32_t>(key, value);
  else if (key == "train.tolerance") config.train.tolerance = parse_number<double>(key, value);
  else if (key == "train.class_weight") {
    std::string v = to_lower_ascii(value);
    if (v == "balanced") config.train.class_weight = model::TrainConfig::ClassWeight::kBalanced;
    else if (v == "none") config.train.class_weight = model::TrainConfig::ClassWeight::kNone;
    else throw UsageError("train.class_weight must be 'balanced' or 'none'");
  } else if (key == "features.toggles") config.toggles = features::parse_toggles(value);
  else if (key == "normalize.lowercase") config.norm.lowercase = parse_bool(key, value);
  else if (key == "normalize.url_token") config.norm.url_token = value;
  else if (key == "normalize.mention_token") config.norm.mention_token = value;
  else if (key == "normalize.number_token") config.norm.number_token = value;
  else throw UsageError("unknown config key '" + key + "'");
}

inline void load_config_file(PipelineConfig& config, const fs::path& path) {
  std::ifstream is(path);
  if (!is.good()) throw DataError("cannot open config file " + path.string());
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line_no) + " is not 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    apply_config_entry(config, section.empty() ? key : section + "." + key, value);
  }
}

// ---------------------------------------------------------------------------
// Artifact paths
// ---------------------------------------------------------------------------

struct Artifacts {
  fs::path out;
  explicit Artifacts(const fs::path& out_dir) : out(out_dir) {}

  fs::path conversations() const { return out / "conversations.jsonl"; }
  fs::path stats_csv() const { return out / "stats.csv"; }
  fs::path stats_txt() const { return out / "stats.txt"; }
  fs::path lm_bin() const { return out / "lm.bin"; }
  fs::path lm_arpa() const { return out / "lm.arpa"; }
  fs::path features_train() const { return out / "features_train.txt"; }
  fs::path features_test() const { return out / "features_test.txt"; }
  fs::path feature_names() const { return out / "feature_names.csv"; }
  fs::path labels_train() const { return out / "labels_train.csv"; }
  fs::path labels_test() const { return out / "labels_test.csv"; }
  fs::path model_bin() const { return out / "model.bin"; }
  fs::path metrics_csv() const { return out / "metrics.csv"; }
  fs::path metrics_txt() const { return out / "metrics.txt"; }
  fs::path ablation_csv() const { return out / "ablation.csv"; }
  fs::path ablation_txt() const { return out / "ablation.txt"; }
  fs::path importance_csv() const { return out / "importance.csv"; }
  fs::path importance_tfidf_csv() const { return out / "importance_tfidf.csv"; }
  fs::path importance_txt() const { return out / "importance.txt"; }
  fs::path manifest() const { return out / "manifest.txt"; }
};

namespace detail {

inline std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os.good()) throw DataError("cannot open " + path.string() + " for writing");
  return os;
}

inline std::ifstream open_in(const fs::path& path, const char* hint) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good())
    throw DataError("cannot open " + path.string() + "; run `engage " + hint + "` first");
  return is;
}

inline std::string fmt_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Conversation JSONL
// ---------------------------------------------------------------------------

inline ordered_json conversation_to_json(const corpus::Conversation& conv) {
  ordered_json turns = ordered_json::array();
  for (const corpus::Conversation::Turn& t : conv.turns) {
    ordered_json tweet{{"tweet_id", t.tweet.tweet_id},
                       {"author_id", t.tweet.author_id},
                       {"inbound", t.tweet.inbound},
                       {"created_at", t.tweet.created_at},
                       {"text", t.tweet.text},
                       {"response_tweet_ids", t.tweet.response_tweet_ids}};
    if (t.tweet.in_response_to.empty()) tweet["in_response_to"] = nullptr;
    else tweet["in_response_to"] = t.tweet.in_response_to;
    turns.push_back(ordered_json{{"role", std::string(corpus::role_name(t.role))},
                                 {"tweet", std::move(tweet)}});
  }
  return ordered_json{{"conversation_id", conv.conversation_id},
                      {"brand_id", conv.brand_id},
                      {"customer_id", conv.customer_id},
                      {"turns", std::move(turns)}};
}

inline corpus::Conversation conversation_from_json(const ordered_json& j) {
  corpus::Conversation conv;
  conv.conversation_id = j.at("conversation_id").get<std::string>();
  conv.brand_id = j.at("brand_id").get<std::string>();
  conv.customer_id = j.at("customer_id").get<std::string>();
  for (const ordered_json& turn : j.at("turns")) {
    corpus::Conversation::Turn t;
    std::string role = turn.at("role").get<std::string>();
    t.role = role == "CUSTOMER" ? corpus::Role::kCustomer
             : role == "BRAND"  ? corpus::Role::kBrand
                                : corpus::Role::kOther;
    const ordered_json& tw = turn.at("tweet");
    t.tweet.tweet_id = tw.at("tweet_id").get<std::string>();
    t.tweet.author_id = tw.at("author_id").get<std::string>();
    t.tweet.inbound = tw.at("inbound").get<bool>();
    t.tweet.created_at = tw.at("created_at").get<std::int64_t>();
    t.tweet.text = tw.at("text").get<std::string>();
    t.tweet.response_tweet_ids = tw.at("response_tweet_ids").get<std::vector<std::string>>();
    if (!tw.at("in_response_to").is_null())
      t.tweet.in_response_to = tw.at("in_response_to").get<std::string>();
    conv.turns.push_back(std::move(t));
  }
  return conv;
}

inline void write_conversations_jsonl(std::ostream& os,
                                      const std::vector<corpus::Conversation>& conversations) {
  for (const corpus::Conversation& conv : conversations)
    os << conversation_to_json(conv).dump() << '\n';
}

inline std::vector<corpus::Conversation> read_conversations_jsonl(std::istream& is) {
  std::vector<corpus::Conversation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(conversation_from_json(ordered_json::parse(line)));
    } catch (const ordered_json::exception& e) {
      throw DataError("conversations file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ingest
// ---------------------------------------------------------------------------

struct IngestReport {
  std::uint64_t parsed = 0;
  std::uint64_t skipped_malformed = 0;
  corpus::ThreadStats threading;
  corpus::CorpusStats stats;
  std::uint64_t no_brand_turn = 0;
  std::uint64_t engaged = 0;
};

inline void write_stats_reports(const Artifacts& artifacts, const IngestReport& report) {
  {
    std::ofstream csv = detail::open_out(artifacts.stats_csv());
    csv << "key,value\n";
    csv << "total_tweets_parsed," << report.parsed << '\n';
    csv << "malformed_rows_skipped," << report.skipped_malformed << '\n';
    csv << "threaded_tweets," << report.threading.threaded_tweets << '\n';
    csv << "dropped_orphan_tweets," << report.threading.dropped_orphans << '\n';
    csv << "dropped_brand_rooted_tweets," << report.threading.dropped_brand_rooted << '\n';
    csv << "reply_cycles_broken," << report.threading.cycles_broken << '\n';
    csv << "total_conversations," << report.stats.total_conversations << '\n';
    csv << "conversations_without_brand_turn," << report.no_brand_turn << '\n';
    csv << "engaged_conversations," << report.engaged << '\n';
    csv << "mean_turns_per_conversation," << detail::fmt_value(report.stats.mean_turns_per_conversation) << '\n';
    csv << "mean_words_per_tweet," << detail::fmt_value(report.stats.mean_words_per_tweet) << '\n';
    csv << "max_conversation_length," << report.stats.max_conversation_length << '\n';
    for (const auto& [brand, count] : report.stats.per_brand_tweet_counts)
      csv << "brand_tweets." << brand << ',' << count << '\n';
  }
  {
    std::ofstream txt = detail::open_out(artifacts.stats_txt());
    txt << "corpus statistics\n";
    txt << "  tweets parsed            " << report.parsed << '\n';
    txt << "  malformed rows skipped   " << report.skipped_malformed << '\n';
    txt << "  conversations            " << report.stats.total_conversations << '\n';
    txt << "  without brand turn       " << report.no_brand_turn << '\n';
    txt << "  engaged                  " << report.engaged << '\n';
    txt << "  mean turns/conversation  " << report.stats.mean_turns_per_conversation << '\n';
    txt << "  mean words/tweet         " << report.stats.mean_words_per_tweet << '\n';
    txt << "  max conversation length  " << report.stats.max_conversation_length << '\n';
    txt << "threading deviations\n";
    txt << "  orphan tweets dropped    " << report.threading.dropped_orphans << '\n';
    txt << "  brand-rooted dropped     " << report.threading.dropped_brand_rooted << '\n';
    txt << "  reply cycles broken      " << report.threading.cycles_broken << '\n';
  }
}

// Parses and threads the corpus; optionally writes conversations.jsonl plus
// the stats reports.
inline IngestReport ingest_run(const PipelineConfig& config, bool write_conversations = true,
                               std::vector<corpus::Conversation>* keep = nullptr) {
  if (config.corpus_path.empty()) throw UsageError("paths.corpus is required for ingest");
  std::ifstream is(config.corpus_path, std::ios::binary);
  if (!is.good()) throw DataError("cannot open corpus file " + config.corpus_path);

  IngestReport report;
  corpus::TweetReader reader(is);
  std::vector<corpus::Tweet> tweets;
  while (auto t = reader.next()) tweets.push_back(std::move(*t));
  report.parsed = reader.parsed_count();
  report.skipped_malformed = reader.skipped_count();

  corpus::ThreadResult threaded = corpus::thread_conversations(std::move(tweets));
  report.threading = threaded.stats;
  report.stats = corpus::corpus_stats(threaded.conversations, config.norm);
  for (const corpus::Conversation& conv : threaded.conversations) {
    if (!conv.has_brand_turn()) ++report.no_brand_turn;
    else if (corpus::label_engagement(conv).engaged) ++report.engaged;
  }

  Artifacts artifacts(config.out_dir);
  if (write_conversations) {
    std::ofstream os = detail::open_out(artifacts.conversations());
    write_conversations_jsonl(os, threaded.conversations);
  }
  write_stats_reports(artifacts, report);
  if (keep != nullptr) *keep = std::move(threaded.conversations);
  return report;
}

// ---------------------------------------------------------------------------
// Splits: labelable conversations only, deterministic in the root seed. The
// classifier split is train_fraction : rest; the LM corpus is carved from the
// train side so it stays disjoint from both classifier train and test.
// ---------------------------------------------------------------------------

struct SplitView {
  std::vector<corpus::Conversation> lm, train, test;
  std::uint64_t excluded_no_brand = 0;
};

inline SplitView split_conversations(std::vector<corpus::Conversation> conversations,
                                     const PipelineConfig& config) {
  SplitView view;
  std::vector<corpus::Conversation> labelable;
  for (corpus::Conversation& conv : conversations) {
    if (conv.has_brand_turn()) labelable.push_back(std::move(conv));
    else ++view.excluded_no_brand;
  }
  if (labelable.size() < 3) throw DataError("need at least 3 labelable conversations to split");

  auto [train_all, test] = corpus::split_train_test(labelable, config.train_fraction, config.seed);
  view.test = std::move(test);

  std::vector<std::size_t> order(train_all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  rng.shuffle(order);
  std::size_t lm_n =
      static_cast<std::size_t>(static_cast<double>(train_all.size()) * config.lm_fraction);
  if (lm_n == 0 && config.lm_fraction > 0.0) lm_n = 1;
  if (lm_n >= train_all.size()) throw DataError("lm_fraction leaves no training conversations");
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < lm_n ? view.lm : view.train).push_back(std::move(train_all[order[k]]));
  return view;
}

inline SplitView load_split(const PipelineConfig& config) {
  Artifacts artifacts(config.out_dir);
  std::ifstream is = detail::open_in(artifacts.conversations(), "ingest");
  return split_conversations(read_conversations_jsonl(is), config);
}

// ---------------------------------------------------------------------------
// Language model stage
// ---------------------------------------------------------------------------

struct TrainLmReport {
  std::uint64_t lm_conversations = 0;
  std::uint64_t responses = 0;
  std::vector<std::string> warnings;
};

inline TrainLmReport train_lm_run(const PipelineConfig& config, bool export_arpa = false) {
  SplitView view = load_split(config);
  std::vector<text::TokenSequence> responses;
  for (const corpus::Conversation& conv : view.lm)
    for (const corpus::Conversation::Turn& t : conv.turns)
      if (t.role == corpus::Role::kBrand)
        responses.push_back(text::tokenize(text::normalize(t.tweet.text, config.norm)));
  if (responses.empty())
    throw DataError("held-out brand-response set is empty; not enough conversations");

  lm::KNModel model = lm::train_model(responses, config.lm_order, config.lm_min_count);

  Artifacts artifacts(config.out_dir);
  {
    std::ofstream os = detail::open_out(artifacts.lm_bin());
    model.save(os);
  }
  if (export_arpa) {
    std::ofstream os = detail::open_out(artifacts.lm_arpa());
    model.write_arpa(os);
  }
  TrainLmReport report;
  report.lm_conversations = view.lm.size();
  report.responses = responses.size();
  report.warnings = model.estimation_warnings();
  return report;
}

// ---------------------------------------------------------------------------
// Feature matrices on disk: sparse triplets plus names/groups sidecar.
// ---------------------------------------------------------------------------

inline void write_matrix(const fs::path& path, const std::vector<features::Example>& examples,
                         std::uint32_t dimension) {
  std::ofstream os = detail::open_out(path);
  os << "# rows " << examples.size() << " cols " << dimension << '\n';
  for (std::size_t row = 0; row < examples.size(); ++row)
    for (const auto& [idx, v] : examples[row].features)
      os << row << ' ' << idx << ' ' << detail::fmt_value(v) << '\n';
}

inline void write_labels(const fs::path& path, const std::vector<features::Example>& examples) {
  std::ofstream os = detail::open_out(path);
  os << "row,conversation_id,label\n";
  for (std::size_t row = 0; row < examples.size(); ++row) {
    os << row << ',';
    csv::write_field(os, examples[row].conversation_id);
    os << ',' << (examples[row].label ? 1 : 0) << '\n';
  }
}

inline void write_feature_names(const fs::path& path, const std::vector<std::string>& names,
                                const std::vector<features::FeatureGroup>& groups) {
  std::ofstream os = detail::open_out(path);
  os << "index,name,group\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    os << i << ',';
    csv::write_field(os, names[i]);
    os << ',' << features::feature_group_name(groups[i]) << '\n';
  }
}

inline std::vector<features::Example> read_matrix(const fs::path& matrix_path,
                                                  const fs::path& labels_path,
                                                  std::uint32_t* dimension_out = nullptr) {
  std::ifstream ms = detail::open_in(matrix_path, "featurize");
  std::string header;
  if (!std::getline(ms, header) || header.rfind("# rows ", 0) != 0)
    throw DataError("malformed feature matrix header in " + matrix_path.string());
  std::istringstream hs(header.substr(2));
  std::string word;
  std::uint64_t rows = 0, cols = 0;
  hs >> word >> rows >> word >> cols;
  if (dimension_out != nullptr) *dimension_out = static_cast<std::uint32_t>(cols);

  std::vector<features::Example> examples(rows);
  std::uint64_t row = 0, idx = 0;
  double value = 0.0;
  while (ms >> row >> idx >> value) {
    if (row >= rows || idx >= cols)
      throw DataError("feature matrix entry out of range in " + matrix_path.string());
    examples[row].features.emplace_back(static_cast<std::uint32_t>(idx), value);
  }

  std::ifstream ls = detail::open_in(labels_path, "featurize");
  csv::Reader reader(ls);
  std::vector<std::string> fields;
  if (!reader.read_record(fields)) throw DataError("empty labels file " + labels_path.string());
  while (reader.read_record(fields)) {
    if (fields.size() != 3) throw DataError("malformed labels row in " + labels_path.string());
    std::uint64_t r = detail::parse_number<std::uint64_t>("labels.row", fields[0]);
    if (r >= rows) throw DataError("labels row out of range in " + labels_path.string());
    examples[r].conversation_id = fields[1];
    examples[r].label = fields[2] == "1";
  }
  return examples;
}

inline void read_feature_names(const fs::path& path, std::vector<std::string>& names,
                               std::vector<features::FeatureGroup>& groups) {
  std::ifstream is = detail::open_in(path, "featurize");
  csv::Reader reader(is);
  std::vector<std::string> fields;
  if (!reader.read_record(fields)) throw DataError("empty feature names file");
  names.clear();
  groups.clear();
  while (reader.read_record(fields)) {
    if (fields.size() != 3) throw DataError("malformed feature names row");
    names.push_back(fields[1]);
    auto g = features::feature_group_from_name(fields[2]);
    if (!g) throw DataError("unknown feature group '" + fields[2] + "' in sidecar");
    groups.push_back(*g);
  }
}

inline eval::FeatureMatrix load_feature_matrix(const PipelineConfig& config) {
  Artifacts artifacts(config.out_dir);
  eval::FeatureMatrix matrix;
  read_feature_names(artifacts.feature_names(), matrix.names, matrix.groups);
  std::uint32_t dim_train = 0, dim_test = 0;
  matrix.train_examples = read_matrix(artifacts.features_train(), artifacts.labels_train(), &dim_train);
  matrix.test_examples = read_matrix(artifacts.features_test(), artifacts.labels_test(), &dim_test);
  if (dim_train != matrix.names.size() || dim_test != matrix.names.size())
    throw DataError("feature matrix dimension does not match the names sidecar");
  for (const features::Example& ex : matrix.train_examples)
    matrix.y_train.push_back(ex.label ? 1 : 0);
  for (const features::Example& ex : matrix.test_examples)
    matrix.y_test.push_back(ex.label ? 1 : 0);
  return matrix;
}

struct FeaturizeReport {
  std::uint64_t train_examples = 0, test_examples = 0;
  std::uint32_t dimension = 0;
  std::uint64_t override_rows = 0, override_rejected = 0, override_unknown_ids = 0;
};

inline FeaturizeReport featurize_run(const PipelineConfig& config) {
  SplitView view = load_split(config);
  Artifacts artifacts(config.out_dir);

  std::optional<lm::KNModel> lm_model;
  if (config.toggles.count(features::FeatureGroup::kPerplexity)) {
    std::ifstream is = detail::open_in(artifacts.lm_bin(), "train-lm");
    lm_model = lm::KNModel::load(is);
  }

  std::vector<features::Lexicon> lexicons = features::load_lexicon_dir(config.lexicon_dir);

  std::optional<features::ExternalScores> overrides;
  if (!config.external_scores_path.empty())
    overrides = features::load_external_scores(fs::path(config.external_scores_path));

  features::TfIdfVocabulary cp_vocab, bap_vocab;
  if (config.toggles.count(features::FeatureGroup::kCp)) {
    std::vector<text::TokenSequence> docs;
    for (const corpus::Conversation& c : view.train)
      docs.push_back(text::tokenize(text::normalize(c.root_tweet().text, config.norm)));
    cp_vocab = features::fit_tfidf(docs, config.tfidf_min_df, config.tfidf_max_features);
  }
  if (config.toggles.count(features::FeatureGroup::kBap)) {
    std::vector<text::TokenSequence> docs;
    for (const corpus::Conversation& c : view.train)
      docs.push_back(text::tokenize(text::normalize(c.initial_brand_tweet().text, config.norm)));
    bap_vocab = features::fit_tfidf(docs, config.tfidf_min_df, config.tfidf_max_features);
  }

  features::FeatureSpace space(std::move(cp_vocab), std::move(bap_vocab), std::move(lexicons),
                               lm_model ? &*lm_model : nullptr, config.toggles, config.norm);

  FeaturizeReport report;
  report.dimension = static_cast<std::uint32_t>(space.dimension());
  const features::ExternalScores* ov = overrides ? &*overrides : nullptr;
  if (overrides) {
    std::unordered_set<std::string> known;
    for (const corpus::Conversation& c : view.train) known.insert(c.conversation_id);
    for (const corpus::Conversation& c : view.test) known.insert(c.conversation_id);
    report.override_rows = overrides->by_conversation.size();
    report.override_rejected = overrides->rejected_rows;
    report.override_unknown_ids = overrides->count_unknown_ids(known);
  }

  std::vector<features::Example> train_examples, test_examples;
  for (const corpus::Conversation& c : view.train)
    train_examples.push_back(features::assemble(c, space, ov));
  for (const corpus::Conversation& c : view.test)
    test_examples.push_back(features::assemble(c, space, ov));
  report.train_examples = train_examples.size();
  report.test_examples = test_examples.size();

  write_matrix(artifacts.features_train(), train_examples, report.dimension);
  write_matrix(artifacts.features_test(), test_examples, report.dimension);
  write_labels(artifacts.labels_train(), train_examples);
  write_labels(artifacts.labels_test(), test_examples);
  write_feature_names(artifacts.feature_names(), space.names(), space.groups());
  return report;
}

// ---------------------------------------------------------------------------
// Train / evaluate / ablate / explain
// ---------------------------------------------------------------------------

struct TrainRunReport {
  std::uint32_t epochs = 0;
  double final_loss = 0.0;
  double train_macro_f1 = 0.0;
};

inline TrainRunReport train_run(const PipelineConfig& config) {
  eval::FeatureMatrix matrix = load_feature_matrix(config);
  eval::ExperimentResult result = eval::run_masked(matrix, config.toggles, config.train);

  Artifacts artifacts(config.out_dir);
  std::ofstream os = detail::open_out(artifacts.model_bin());
  result.model.save(os);

  TrainRunReport report;
  report.epochs = result.epochs;
  report.final_loss = result.final_loss;
  report.train_macro_f1 = result.metrics.macro_f1;
  return report;
}

struct EvaluateReport {
  eval::MetricsReport model_metrics;
  eval::MetricsReport stratified, uniform, minor;
};

inline EvaluateReport evaluate_run(const PipelineConfig& config) {
  eval::FeatureMatrix matrix = load_feature_matrix(config);
  Artifacts artifacts(config.out_dir);
  std::ifstream ms = detail::open_in(artifacts.model_bin(), "train");
  model::EngagementModel bundle = model::EngagementModel::load(ms);
  if (bundle.logistic.dimension > matrix.dimension())
    throw DataError("model dimension exceeds the feature matrix; re-run featurize/train");

  // the model was trained on the toggle subset recorded in its bundle
  std::set<features::FeatureGroup> toggles = features::parse_toggles(bundle.toggles);
  std::vector<std::int32_t> remap(matrix.dimension(), -1);
  std::uint32_t next = 0;
  for (std::uint32_t i = 0; i < matrix.dimension(); ++i)
    if (toggles.count(matrix.groups[i])) remap[i] = static_cast<std::int32_t>(next++);
  if (next != bundle.logistic.dimension)
    throw DataError("model/feature-matrix toggle mismatch; re-run featurize with matching toggles");

  std::vector<char> y_pred;
  for (const features::Example& ex : matrix.test_examples) {
    model::SparseRow row;
    for (const auto& [idx, v] : ex.features)
      if (remap[idx] >= 0) row.emplace_back(static_cast<std::uint32_t>(remap[idx]), v);
    y_pred.push_back(bundle.predict_raw(std::move(row)) ? 1 : 0);
  }

  EvaluateReport report;
  report.model_metrics = eval::evaluate_predictions(matrix.y_test, y_pred);
  report.stratified = eval::baseline_metrics(model::BaselineKind::kStratified, matrix.y_train,
                                             matrix.y_test, config.seed);
  report.uniform = eval::baseline_metrics(model::BaselineKind::kUniform, matrix.y_train,
                                          matrix.y_test, config.seed + 1);
  report.minor = eval::baseline_metrics(model::BaselineKind::kMinor, matrix.y_train,
                                        matrix.y_test, config.seed + 2);

  std::vector<std::pair<std::string, eval::MetricsReport>> rows = {
      {"stratified_baseline", report.stratified},
      {"uniform_baseline", report.uniform},
      {"minor_class_baseline", report.minor},
      {"logreg:" + bundle.toggles, report.model_metrics}};
  {
    std::ofstream os = detail::open_out(artifacts.metrics_csv());
    eval::write_metrics_csv(os, rows);
  }
  {
    std::ofstream os = detail::open_out(artifacts.metrics_txt());
    eval::write_metrics_txt(os, rows);
  }
  return report;
}

inline eval::AblationReport ablate_run(const PipelineConfig& config) {
  eval::FeatureMatrix matrix = load_feature_matrix(config);
  eval::AblationReport report = eval::ablate_matrix(matrix, config.toggles, config.train);
  Artifacts artifacts(config.out_dir);
  {
    std::ofstream os = detail::open_out(artifacts.ablation_csv());
    eval::write_ablation_csv(os, report);
  }
  {
    std::ofstream os = detail::open_out(artifacts.ablation_txt());
    eval::write_ablation_txt(os, report);
  }
  return report;
}

inline eval::ImportanceReport explain_run(const PipelineConfig& config) {
  Artifacts artifacts(config.out_dir);
  std::ifstream ms = detail::open_in(artifacts.model_bin(), "train");
  model::EngagementModel bundle = model::EngagementModel::load(ms);
  eval::ImportanceReport report = eval::importance(bundle);
  {
    std::ofstream os = detail::open_out(artifacts.importance_csv());
    eval::write_importance_csv(os, report);
  }
  {
    std::ofstream os = detail::open_out(artifacts.importance_tfidf_csv());
    eval::write_importance_tfidf_csv(os, report);
  }
  {
    std::ofstream os = detail::open_out(artifacts.importance_txt());
    eval::write_importance_txt(os, report);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Manifest + reproduce
// ---------------------------------------------------------------------------

inline std::string file_hash_hex(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good()) throw DataError("cannot hash missing artifact " + path.string());
  Fnv1a64 hasher;
  char buf[65536];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0)
    hasher.update(buf, static_cast<std::size_t>(is.gcount()));
  char out[24];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(hasher.digest()));
  return out;
}

inline std::vector<fs::path> manifest_artifacts(const Artifacts& artifacts) {
  return {artifacts.conversations(), artifacts.stats_csv(),    artifacts.lm_bin(),
          artifacts.model_bin(),     artifacts.metrics_csv(),  artifacts.ablation_csv(),
          artifacts.importance_csv()};
}

inline void write_manifest(const PipelineConfig& config) {
  Artifacts artifacts(config.out_dir);
  std::ofstream os = detail::open_out(artifacts.manifest());
  os << "seed\t" << config.seed << '\n';
  for (const fs::path& path : manifest_artifacts(artifacts))
    os << path.filename().string() << "\tfnv1a64:" << file_hash_hex(path) << '\n';
}

// Runs every stage in order and writes the manifest; failures abort with the
// stage name attached.
inline void reproduce_run(const PipelineConfig& config, std::ostream& log) {
  struct Stage {
    const char* name;
    std::function<void()> fn;
  };
  const std::vector<Stage> stages = {
      {"ingest", [&] { ingest_run(config); }},
      {"train-lm", [&] { train_lm_run(config); }},
      {"featurize", [&] { featurize_run(config); }},
      {"train", [&] { train_run(config); }},
      {"evaluate", [&] { evaluate_run(config); }},
      {"ablate", [&] { ablate_run(config); }},
      {"explain", [&] { explain_run(config); }},
      {"manifest", [&] { write_manifest(config); }},
  };
  for (const Stage& stage : stages) {
    log << "[engage] reproduce: " << stage.name << "\n";
    try {
      stage.fn();
    } catch (const std::exception& e) {
      throw DataError("stage '" + std::string(stage.name) + "' failed: " + e.what());
    }
  }
}

}  // namespace engage::pipeline

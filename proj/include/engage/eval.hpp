#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "engage/common.hpp"
#include "engage/corpus.hpp"
#include "engage/features.hpp"
#include "engage/model.hpp"
#include "engage/ngram_lm.hpp"
#include "engage/text.hpp"

namespace engage::eval {

// ---------------------------------------------------------------------------
// Metrics (positive class = engaged)
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t total() const { return tp + fp + fn + tn; }
};

inline ConfusionMatrix confusion(std::span<const char> y_true, std::span<const char> y_pred) {
  if (y_true.size() != y_pred.size())
    throw UsageError("confusion: label vectors differ in length");
  if (y_true.empty()) throw UsageError("confusion: empty label vectors");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] && y_pred[i]) ++cm.tp;
    else if (!y_true[i] && y_pred[i]) ++cm.fp;
    else if (y_true[i] && !y_pred[i]) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

struct ClassMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::uint64_t support = 0;
};

struct MetricsReport {
  ClassMetrics engaged, not_engaged;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
};

// Zero-denominator convention: precision/recall/F1 are 0 when undefined.
inline MetricsReport macro_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw UsageError("macro_metrics: empty confusion matrix");
  auto cls = [](std::uint64_t tp, std::uint64_t fp, std::uint64_t fn,
                std::uint64_t support) {
    ClassMetrics m;
    m.support = support;
    m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
  };
  MetricsReport r;
  r.engaged = cls(cm.tp, cm.fp, cm.fn, cm.tp + cm.fn);
  r.not_engaged = cls(cm.tn, cm.fn, cm.fp, cm.tn + cm.fp);
  r.macro_precision = (r.engaged.precision + r.not_engaged.precision) / 2.0;
  r.macro_recall = (r.engaged.recall + r.not_engaged.recall) / 2.0;
  r.macro_f1 = (r.engaged.f1 + r.not_engaged.f1) / 2.0;
  return r;
}

inline MetricsReport evaluate_predictions(std::span<const char> y_true,
                                          std::span<const char> y_pred) {
  return macro_metrics(confusion(y_true, y_pred));
}

// ---------------------------------------------------------------------------
// Experiment harness
// ---------------------------------------------------------------------------

struct ExperimentOptions {
  double lm_fraction = 0.1;  // share of train conversations held out for the LM
  int lm_order = 5;
  std::uint64_t lm_min_count = 2;
  std::uint32_t tfidf_min_df = 5;
  std::size_t tfidf_max_features = 50000;
  model::TrainConfig train;
  text::NormalizationConfig norm;
  std::uint64_t seed = 42;
};

// Assembled matrices plus the names/groups sidecar; the unit that featurize
// writes to disk and train/evaluate/ablate read back.
struct FeatureMatrix {
  std::vector<features::Example> train_examples, test_examples;
  std::vector<char> y_train, y_test;
  std::vector<std::string> names;
  std::vector<features::FeatureGroup> groups;
  std::uint32_t dimension() const { return static_cast<std::uint32_t>(names.size()); }
};

// Artifacts fitted once on the training split for a union of feature groups;
// per-toggle experiments mask columns out of the assembled full-space matrix,
// which is equivalent to assembling with the reduced toggle set.
struct ExperimentContext {
  std::optional<lm::KNModel> lm;
  std::optional<features::FeatureSpace> space;
  FeatureMatrix matrix;
  std::uint64_t excluded_train = 0, excluded_test = 0;  // no-brand-turn conversations
  std::uint64_t lm_conversations = 0;
  std::uint64_t overridden_unknown_ids = 0;
};

inline ExperimentContext build_context(const std::vector<corpus::Conversation>& train,
                                       const std::vector<corpus::Conversation>& test,
                                       std::vector<features::Lexicon> lexicons,
                                       const std::set<features::FeatureGroup>& groups,
                                       const ExperimentOptions& opt,
                                       const features::ExternalScores* overrides = nullptr) {
  ExperimentContext ctx;

  std::vector<const corpus::Conversation*> train_ok, test_ok;
  for (const corpus::Conversation& c : train) {
    if (c.has_brand_turn()) train_ok.push_back(&c);
    else ++ctx.excluded_train;
  }
  for (const corpus::Conversation& c : test) {
    if (c.has_brand_turn()) test_ok.push_back(&c);
    else ++ctx.excluded_test;
  }
  if (train_ok.size() < 2) throw DataError("not enough labelable training conversations");
  if (test_ok.empty()) throw DataError("no labelable test conversations");

  // Carve the language-model corpus out of the training conversations so the
  // novelty feature never sees classifier training or test material.
  std::vector<std::size_t> order(train_ok.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  rng.shuffle(order);
  std::size_t lm_n = static_cast<std::size_t>(static_cast<double>(train_ok.size()) * opt.lm_fraction);
  bool needs_lm = groups.count(features::FeatureGroup::kPerplexity) > 0;
  if (needs_lm && lm_n == 0) lm_n = 1;

  std::vector<const corpus::Conversation*> lm_convs, cls_train;
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < lm_n ? lm_convs : cls_train).push_back(train_ok[order[k]]);
  ctx.lm_conversations = lm_convs.size();
  if (cls_train.empty()) throw DataError("training split is empty after the LM carve");

  if (needs_lm) {
    std::vector<text::TokenSequence> responses;
    for (const corpus::Conversation* c : lm_convs)
      for (const corpus::Conversation::Turn& t : c->turns)
        if (t.role == corpus::Role::kBrand)
          responses.push_back(text::tokenize(text::normalize(t.tweet.text, opt.norm)));
    if (responses.empty())
      throw DataError("held-out brand-response set for the language model is empty");
    ctx.lm = lm::train_model(responses, opt.lm_order, opt.lm_min_count);
  }

  std::vector<text::TokenSequence> customer_docs, brand_docs;
  if (groups.count(features::FeatureGroup::kCp)) {
    for (const corpus::Conversation* c : cls_train)
      customer_docs.push_back(text::tokenize(text::normalize(c->root_tweet().text, opt.norm)));
  }
  if (groups.count(features::FeatureGroup::kBap)) {
    for (const corpus::Conversation* c : cls_train)
      brand_docs.push_back(
          text::tokenize(text::normalize(c->initial_brand_tweet().text, opt.norm)));
  }
  features::TfIdfVocabulary cp_vocab, bap_vocab;
  if (!customer_docs.empty())
    cp_vocab = features::fit_tfidf(customer_docs, opt.tfidf_min_df, opt.tfidf_max_features);
  if (!brand_docs.empty())
    bap_vocab = features::fit_tfidf(brand_docs, opt.tfidf_min_df, opt.tfidf_max_features);

  ctx.space.emplace(std::move(cp_vocab), std::move(bap_vocab), std::move(lexicons),
                    ctx.lm ? &*ctx.lm : nullptr, groups, opt.norm);

  if (overrides != nullptr) {
    std::unordered_set<std::string> known;
    for (const corpus::Conversation* c : cls_train) known.insert(c->conversation_id);
    for (const corpus::Conversation* c : test_ok) known.insert(c->conversation_id);
    ctx.overridden_unknown_ids = overrides->count_unknown_ids(known);
  }

  ctx.matrix.names = ctx.space->names();
  ctx.matrix.groups = ctx.space->groups();
  for (const corpus::Conversation* c : cls_train) {
    ctx.matrix.train_examples.push_back(features::assemble(*c, *ctx.space, overrides));
    ctx.matrix.y_train.push_back(ctx.matrix.train_examples.back().label ? 1 : 0);
  }
  for (const corpus::Conversation* c : test_ok) {
    ctx.matrix.test_examples.push_back(features::assemble(*c, *ctx.space, overrides));
    ctx.matrix.y_test.push_back(ctx.matrix.test_examples.back().label ? 1 : 0);
  }
  return ctx;
}

struct ExperimentResult {
  MetricsReport metrics;
  model::EngagementModel model;
  std::string feature_set;
  std::uint32_t epochs = 0;
  double final_loss = 0.0;
};

// Trains and evaluates on the column subset belonging to `toggles`.
inline ExperimentResult run_masked(const FeatureMatrix& matrix,
                                   const std::set<features::FeatureGroup>& toggles,
                                   const model::TrainConfig& train_config) {
  std::vector<std::int32_t> remap(matrix.dimension(), -1);
  std::vector<std::string> names;
  std::vector<features::FeatureGroup> groups;
  for (std::uint32_t i = 0; i < matrix.dimension(); ++i) {
    if (toggles.count(matrix.groups[i])) {
      remap[i] = static_cast<std::int32_t>(names.size());
      names.push_back(matrix.names[i]);
      groups.push_back(matrix.groups[i]);
    }
  }
  std::uint32_t dim = static_cast<std::uint32_t>(names.size());
  if (dim == 0) throw UsageError("toggle set selects no features");

  auto mask_rows = [&](const std::vector<features::Example>& examples) {
    std::vector<model::SparseRow> rows;
    rows.reserve(examples.size());
    for (const features::Example& ex : examples) {
      model::SparseRow row;
      for (const auto& [idx, v] : ex.features)
        if (idx < remap.size() && remap[idx] >= 0)
          row.emplace_back(static_cast<std::uint32_t>(remap[idx]), v);
      rows.push_back(std::move(row));
    }
    return rows;
  };

  std::vector<model::SparseRow> train_rows = mask_rows(matrix.train_examples);
  std::vector<model::SparseRow> test_rows = mask_rows(matrix.test_examples);

  std::vector<std::uint32_t> dense_idx;
  for (std::uint32_t i = 0; i < dim; ++i)
    if (groups[i] != features::FeatureGroup::kCp && groups[i] != features::FeatureGroup::kBap)
      dense_idx.push_back(i);

  model::Standardizer standardizer = model::fit_standardizer(train_rows, dim, dense_idx);
  model::apply_standardizer(standardizer, train_rows);
  model::apply_standardizer(standardizer, test_rows);

  model::TrainResult trained =
      model::train_logreg(train_rows, matrix.y_train, dim, train_config);

  std::vector<char> y_pred;
  y_pred.reserve(test_rows.size());
  for (const model::SparseRow& row : test_rows)
    y_pred.push_back(model::predict(trained.model, row) ? 1 : 0);

  ExperimentResult result;
  result.metrics = evaluate_predictions(matrix.y_test, y_pred);
  result.model.logistic = std::move(trained.model);
  result.model.standardizer = std::move(standardizer);
  result.model.feature_names = std::move(names);
  result.model.feature_groups = std::move(groups);
  result.model.toggles = features::format_toggles(toggles);
  result.model.config = train_config;
  result.feature_set = result.model.toggles;
  result.epochs = trained.epochs;
  result.final_loss = trained.final_loss;
  return result;
}

// End to end: fit vocab/LM/standardizer on train, assemble, train, evaluate.
inline ExperimentResult run_masked(const ExperimentContext& ctx,
                                   const std::set<features::FeatureGroup>& toggles,
                                   const model::TrainConfig& train_config) {
  for (features::FeatureGroup g : toggles)
    if (!ctx.space->toggles().count(g))
      throw UsageError("toggle " + std::string(features::feature_group_name(g)) +
                       " is not part of this experiment context");
  return run_masked(ctx.matrix, toggles, train_config);
}

inline ExperimentResult run_experiment(const std::vector<corpus::Conversation>& train,
                                       const std::vector<corpus::Conversation>& test,
                                       std::vector<features::Lexicon> lexicons,
                                       const std::set<features::FeatureGroup>& toggles,
                                       const ExperimentOptions& opt,
                                       const features::ExternalScores* overrides = nullptr) {
  ExperimentContext ctx = build_context(train, test, std::move(lexicons), toggles, opt, overrides);
  return run_masked(ctx, toggles, opt.train);
}

inline MetricsReport baseline_metrics(model::BaselineKind kind, std::span<const char> y_train,
                                      std::span<const char> y_test, std::uint64_t seed) {
  std::vector<char> train(y_train.begin(), y_train.end());
  std::vector<char> preds = model::baseline_predict(kind, train, y_test.size(), seed);
  return evaluate_predictions(y_test, preds);
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string removed;  // "none" for the full-model row
  MetricsReport metrics;
  double delta_f1 = 0.0;  // vs the full model
};

struct AblationReport {
  std::vector<AblationRow> rows;
};

inline AblationReport ablate_matrix(const FeatureMatrix& matrix,
                                    const std::set<features::FeatureGroup>& groups,
                                    const model::TrainConfig& train_config) {
  if (groups.size() < 2) throw UsageError("ablation needs at least two feature groups");
  AblationReport report;
  ExperimentResult full = run_masked(matrix, groups, train_config);
  report.rows.push_back({"none", full.metrics, 0.0});
  for (features::FeatureGroup g : groups) {
    std::set<features::FeatureGroup> reduced = groups;
    reduced.erase(g);
    ExperimentResult r = run_masked(matrix, reduced, train_config);
    report.rows.push_back({std::string(features::feature_group_name(g)), r.metrics,
                           r.metrics.macro_f1 - full.metrics.macro_f1});
  }
  return report;
}

inline AblationReport ablate_context(const ExperimentContext& ctx,
                                     const std::set<features::FeatureGroup>& groups,
                                     const model::TrainConfig& train_config) {
  return ablate_matrix(ctx.matrix, groups, train_config);
}

inline AblationReport ablate(const std::vector<corpus::Conversation>& train,
                             const std::vector<corpus::Conversation>& test,
                             std::vector<features::Lexicon> lexicons,
                             const std::set<features::FeatureGroup>& groups,
                             const ExperimentOptions& opt,
                             const features::ExternalScores* overrides = nullptr) {
  ExperimentContext ctx = build_context(train, test, std::move(lexicons), groups, opt, overrides);
  return ablate_context(ctx, groups, opt.train);
}

// ---------------------------------------------------------------------------
// Feature importance
// ---------------------------------------------------------------------------

struct ImportanceRow {
  std::string name;
  features::FeatureGroup group;
  double coefficient = 0.0;
};

struct ImportanceReport {
  std::vector<ImportanceRow> stylistic;  // signed coefficient, descending
  std::vector<ImportanceRow> tfidf_top;  // |coefficient|, descending
};

inline ImportanceReport importance(const model::EngagementModel& m,
                                   std::size_t tfidf_top_k = 25) {
  if (m.feature_names.size() != m.logistic.weights.size())
    throw UsageError("model is missing its names/groups sidecar");
  ImportanceReport report;
  std::vector<ImportanceRow> tfidf;
  for (std::size_t i = 0; i < m.feature_names.size(); ++i) {
    ImportanceRow row{m.feature_names[i], m.feature_groups[i], m.logistic.weights[i]};
    if (row.group == features::FeatureGroup::kCp || row.group == features::FeatureGroup::kBap)
      tfidf.push_back(std::move(row));
    else
      report.stylistic.push_back(std::move(row));
  }
  std::sort(report.stylistic.begin(), report.stylistic.end(),
            [](const ImportanceRow& a, const ImportanceRow& b) {
              if (a.coefficient != b.coefficient) return a.coefficient > b.coefficient;
              return a.name < b.name;
            });
  std::sort(tfidf.begin(), tfidf.end(), [](const ImportanceRow& a, const ImportanceRow& b) {
    double am = std::abs(a.coefficient), bm = std::abs(b.coefficient);
    if (am != bm) return am > bm;
    return a.name < b.name;
  });
  if (tfidf.size() > tfidf_top_k) tfidf.resize(tfidf_top_k);
  report.tfidf_top = std::move(tfidf);
  return report;
}

inline std::optional<double> stylistic_coefficient(const ImportanceReport& report,
                                                   std::string_view name) {
  for (const ImportanceRow& row : report.stylistic)
    if (row.name == name) return row.coefficient;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace detail

inline void write_metrics_csv(std::ostream& os,
                              const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  os << "model,macro_precision,macro_recall,macro_f1,"
        "precision_engaged,recall_engaged,f1_engaged,support_engaged,"
        "precision_not_engaged,recall_not_engaged,f1_not_engaged,support_not_engaged\n";
  for (const auto& [label, m] : rows) {
    os << label << ',' << detail::fmt(m.macro_precision) << ',' << detail::fmt(m.macro_recall)
       << ',' << detail::fmt(m.macro_f1) << ',' << detail::fmt(m.engaged.precision) << ','
       << detail::fmt(m.engaged.recall) << ',' << detail::fmt(m.engaged.f1) << ','
       << m.engaged.support << ',' << detail::fmt(m.not_engaged.precision) << ','
       << detail::fmt(m.not_engaged.recall) << ',' << detail::fmt(m.not_engaged.f1) << ','
       << m.not_engaged.support << '\n';
  }
}

inline void write_metrics_txt(std::ostream& os,
                              const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t width = 24;
  for (const auto& [label, m] : rows) width = std::max(width, label.size() + 2);
  os << std::string(width, ' ') << "macro P   macro R   macro F1\n";
  for (const auto& [label, m] : rows) {
    os << label << std::string(width - label.size(), ' ') << detail::fmt(m.macro_precision)
       << "  " << detail::fmt(m.macro_recall) << "  " << detail::fmt(m.macro_f1) << '\n';
  }
}

inline void write_ablation_csv(std::ostream& os, const AblationReport& report) {
  os << "removed_group,macro_precision,macro_recall,macro_f1,delta_f1\n";
  for (const AblationRow& row : report.rows)
    os << row.removed << ',' << detail::fmt(row.metrics.macro_precision) << ','
       << detail::fmt(row.metrics.macro_recall) << ',' << detail::fmt(row.metrics.macro_f1)
       << ',' << detail::fmt(row.delta_f1) << '\n';
}

inline void write_ablation_txt(std::ostream& os, const AblationReport& report) {
  os << "removed       macro P   macro R   macro F1  delta F1\n";
  for (const AblationRow& row : report.rows) {
    std::string label = row.removed;
    label.resize(14, ' ');
    os << label << detail::fmt(row.metrics.macro_precision) << "  "
       << detail::fmt(row.metrics.macro_recall) << "  " << detail::fmt(row.metrics.macro_f1)
       << "  " << detail::fmt(row.delta_f1) << '\n';
  }
}

inline void write_importance_csv(std::ostream& os, const ImportanceReport& report) {
  os << "feature,group,coefficient\n";
  for (const ImportanceRow& row : report.stylistic) {
    csv::write_field(os, row.name);
    os << ',' << features::feature_group_name(row.group) << ',' << detail::fmt(row.coefficient)
       << '\n';
  }
}

inline void write_importance_tfidf_csv(std::ostream& os, const ImportanceReport& report) {
  os << "feature,group,coefficient\n";
  for (const ImportanceRow& row : report.tfidf_top) {
    csv::write_field(os, row.name);
    os << ',' << features::feature_group_name(row.group) << ',' << detail::fmt(row.coefficient)
       << '\n';
  }
}

inline void write_importance_txt(std::ostream& os, const ImportanceReport& report) {
  os << "stylistic feature                coefficient\n";
  for (const ImportanceRow& row : report.stylistic) {
    std::string label = row.name;
    label.resize(33, ' ');
    os << label << detail::fmt(row.coefficient) << '\n';
  }
}

}  // namespace engage::eval

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "engage/common.hpp"
#include "engage/features.hpp"

namespace engage::model {

using SparseRow = std::vector<std::pair<std::uint32_t, double>>;

struct TrainConfig {
  double l2_strength = 1.0;
  double learning_rate = 0.1;
  std::uint32_t max_epochs = 2000;
  double tolerance = 1e-6;
  std::uint64_t seed = 42;
  enum class ClassWeight : std::uint8_t { kNone = 0, kBalanced = 1 };
  ClassWeight class_weight = ClassWeight::kBalanced;

  void validate() const {
    if (!(l2_strength >= 0.0)) throw UsageError("l2_strength must be non-negative");
    if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
    if (max_epochs == 0) throw UsageError("max_epochs must be positive");
    if (!(tolerance > 0.0 && tolerance < 1.0)) throw UsageError("tolerance must lie in (0, 1)");
  }
};

// ---------------------------------------------------------------------------
// Standardizer: zero mean, unit variance on the dense stylistic columns;
// TF-IDF blocks pass through unscaled.
// ---------------------------------------------------------------------------

class Standardizer {
 public:
  Standardizer() = default;

  Standardizer(std::uint32_t dimension, std::vector<std::uint32_t> indices,
               std::vector<double> mean, std::vector<double> stddev)
      : dimension_(dimension),
        indices_(std::move(indices)),
        mean_(std::move(mean)),
        stddev_(std::move(stddev)) {
    build_slots();
  }

  std::uint32_t dimension() const { return dimension_; }
  const std::vector<std::uint32_t>& indices() const { return indices_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return stddev_; }

  void apply(SparseRow& row) const {
    for (auto& [idx, v] : row) {
      if (idx >= slots_.size()) continue;
      std::int32_t slot = slots_[idx];
      if (slot >= 0) v = (v - mean_[static_cast<std::size_t>(slot)]) /
                         stddev_[static_cast<std::size_t>(slot)];
    }
  }

  SparseRow transformed(SparseRow row) const {
    apply(row);
    return row;
  }

 private:
  void build_slots() {
    slots_.assign(dimension_, -1);
    for (std::size_t k = 0; k < indices_.size(); ++k)
      slots_[indices_[k]] = static_cast<std::int32_t>(k);
  }

  std::uint32_t dimension_ = 0;
  std::vector<std::uint32_t> indices_;
  std::vector<double> mean_, stddev_;
  std::vector<std::int32_t> slots_;
};

// Two-pass mean/variance over the given dense columns; absent coordinates
// count as zero. A zero-variance column gets stddev 1 so it standardizes to
// all zeros.
inline Standardizer fit_standardizer(const std::vector<SparseRow>& rows, std::uint32_t dimension,
                                     const std::vector<std::uint32_t>& dense_indices) {
  if (rows.empty()) throw DataError("cannot fit a standardizer on an empty matrix");
  std::vector<std::int32_t> slot(dimension, -1);
  for (std::size_t k = 0; k < dense_indices.size(); ++k)
    slot[dense_indices[k]] = static_cast<std::int32_t>(k);

  const double n = static_cast<double>(rows.size());
  std::vector<double> mean(dense_indices.size(), 0.0);
  for (const SparseRow& row : rows)
    for (const auto& [idx, v] : row)
      if (idx < dimension && slot[idx] >= 0) mean[static_cast<std::size_t>(slot[idx])] += v;
  for (double& m : mean) m /= n;

  std::vector<double> var(dense_indices.size(), 0.0);
  std::vector<std::uint64_t> seen(dense_indices.size(), 0);
  for (const SparseRow& row : rows)
    for (const auto& [idx, v] : row)
      if (idx < dimension && slot[idx] >= 0) {
        std::size_t k = static_cast<std::size_t>(slot[idx]);
        double d = v - mean[k];
        var[k] += d * d;
        ++seen[k];
      }
  std::vector<double> stddev(dense_indices.size(), 1.0);
  for (std::size_t k = 0; k < dense_indices.size(); ++k) {
    // coordinates missing from a row are zeros
    var[k] += (n - static_cast<double>(seen[k])) * mean[k] * mean[k];
    double sd = std::sqrt(var[k] / n);
    stddev[k] = sd > 0.0 ? sd : 1.0;
  }
  return Standardizer(dimension, dense_indices, std::move(mean), std::move(stddev));
}

inline void apply_standardizer(const Standardizer& standardizer, std::vector<SparseRow>& rows) {
  for (SparseRow& row : rows) standardizer.apply(row);
}

// ---------------------------------------------------------------------------
// Logistic regression, full-batch gradient descent
// ---------------------------------------------------------------------------

struct LogisticModel {
  std::uint32_t dimension = 0;
  std::vector<double> weights;
  double bias = 0.0;
};

struct TrainResult {
  LogisticModel model;
  std::uint32_t epochs = 0;
  double final_loss = 0.0;
  double final_grad_norm = 0.0;
  std::vector<double> loss_by_epoch;
};

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// ln(1 + e^z) - y*z, evaluated without overflow
inline double cross_entropy(double z, double y) {
  if (z > 0.0) return (1.0 - y) * z + std::log1p(std::exp(-z));
  return -y * z + std::log1p(std::exp(z));
}

inline double dot(const LogisticModel& m, const SparseRow& row) {
  double z = m.bias;
  for (const auto& [idx, v] : row) {
    if (idx >= m.dimension) throw UsageError("feature index out of range for this model");
    z += m.weights[idx] * v;
  }
  return z;
}

}  // namespace detail

// Mean (optionally class-weighted) logistic loss plus (l2/2)*||w||^2; the
// bias is not penalized. Exposed so gradient checks can difference it.
inline double logistic_loss(const std::vector<SparseRow>& rows, const std::vector<char>& labels,
                            const LogisticModel& m, double l2_strength, double weight_pos,
                            double weight_neg) {
  double total = 0.0, weight_sum = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double y = labels[i] ? 1.0 : 0.0;
    double w = labels[i] ? weight_pos : weight_neg;
    total += w * detail::cross_entropy(detail::dot(m, rows[i]), y);
    weight_sum += w;
  }
  double penalty = 0.0;
  for (double w : m.weights) penalty += w * w;
  return total / weight_sum + 0.5 * l2_strength * penalty;
}

inline std::pair<double, double> class_weights(const std::vector<char>& labels,
                                               TrainConfig::ClassWeight mode) {
  std::size_t pos = 0;
  for (char y : labels) pos += y ? 1 : 0;
  std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0)
    throw DataError("training labels contain a single class; need at least one of each");
  if (mode == TrainConfig::ClassWeight::kNone) return {1.0, 1.0};
  double n = static_cast<double>(labels.size());
  return {n / (2.0 * static_cast<double>(pos)), n / (2.0 * static_cast<double>(neg))};
}

inline TrainResult train_logreg(const std::vector<SparseRow>& rows,
                                const std::vector<char>& labels, std::uint32_t dimension,
                                const TrainConfig& config) {
  config.validate();
  if (rows.size() != labels.size()) throw UsageError("rows and labels differ in length");
  if (rows.empty()) throw DataError("cannot train on an empty dataset");
  auto [weight_pos, weight_neg] = class_weights(labels, config.class_weight);

  TrainResult result;
  LogisticModel& m = result.model;
  m.dimension = dimension;
  m.weights.assign(dimension, 0.0);

  std::vector<double> grad(dimension, 0.0);
  const double weight_sum = [&] {
    double s = 0.0;
    for (char y : labels) s += y ? weight_pos : weight_neg;
    return s;
  }();

  for (std::uint32_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_bias = 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double y = labels[i] ? 1.0 : 0.0;
      double w = labels[i] ? weight_pos : weight_neg;
      double z = detail::dot(m, rows[i]);
      loss += w * detail::cross_entropy(z, y);
      double g = w * (detail::sigmoid(z) - y);
      for (const auto& [idx, v] : rows[i]) grad[idx] += g * v;
      grad_bias += g;
    }
    loss /= weight_sum;
    double penalty = 0.0;
    for (double w : m.weights) penalty += w * w;
    loss += 0.5 * config.l2_strength * penalty;
    if (!std::isfinite(loss))
      throw DataError("training diverged (loss is not finite) at learning rate " +
                      std::to_string(config.learning_rate));
    result.loss_by_epoch.push_back(loss);
    result.final_loss = loss;

    double grad_norm_sq = 0.0;
    for (std::uint32_t j = 0; j < dimension; ++j) {
      grad[j] = grad[j] / weight_sum + config.l2_strength * m.weights[j];
      grad_norm_sq += grad[j] * grad[j];
    }
    grad_bias /= weight_sum;
    grad_norm_sq += grad_bias * grad_bias;
    result.final_grad_norm = std::sqrt(grad_norm_sq);
    result.epochs = epoch + 1;
    if (result.final_grad_norm < config.tolerance) break;

    for (std::uint32_t j = 0; j < dimension; ++j) m.weights[j] -= config.learning_rate * grad[j];
    m.bias -= config.learning_rate * grad_bias;
  }
  return result;
}

inline double predict_proba(const LogisticModel& m, const SparseRow& row) {
  return detail::sigmoid(detail::dot(m, row));
}

// Ties at exactly the threshold predict positive.
inline bool predict(const LogisticModel& m, const SparseRow& row, double threshold = 0.5) {
  return predict_proba(m, row) >= threshold;
}

// ---------------------------------------------------------------------------
// Naive baselines
// ---------------------------------------------------------------------------

enum class BaselineKind : std::uint8_t { kStratified = 0, kUniform, kMinor };

inline std::string_view baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::kStratified: return "stratified";
    case BaselineKind::kUniform: return "uniform";
    case BaselineKind::kMinor: return "minor_class";
  }
  return "stratified";
}

inline std::vector<char> baseline_predict(BaselineKind kind, const std::vector<char>& y_train,
                                          std::size_t n_test, std::uint64_t seed) {
  if (y_train.empty()) throw UsageError("baseline requires nonempty training labels");
  std::size_t pos = 0;
  for (char y : y_train) pos += y ? 1 : 0;
  double prevalence = static_cast<double>(pos) / static_cast<double>(y_train.size());

  std::vector<char> out(n_test, 0);
  Rng rng(seed);
  switch (kind) {
    case BaselineKind::kStratified:
      for (char& y : out) y = rng.unit() < prevalence ? 1 : 0;
      break;
    case BaselineKind::kUniform:
      for (char& y : out) y = rng.unit() < 0.5 ? 1 : 0;
      break;
    case BaselineKind::kMinor: {
      char minor = pos * 2 <= y_train.size() ? 1 : 0;  // tie predicts positive
      std::fill(out.begin(), out.end(), minor);
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persisted model bundle: weights + standardizer + names/groups sidecar.
// Reload reproduces predictions exactly (doubles travel as raw bits).
// ---------------------------------------------------------------------------

struct EngagementModel {
  LogisticModel logistic;
  Standardizer standardizer;
  std::vector<std::string> feature_names;
  std::vector<features::FeatureGroup> feature_groups;
  std::string toggles;  // feature groups the matrix was built with
  TrainConfig config;

  double predict_proba_raw(SparseRow raw) const {
    standardizer.apply(raw);
    return predict_proba(logistic, raw);
  }
  bool predict_raw(SparseRow raw, double threshold = 0.5) const {
    return predict_proba_raw(std::move(raw)) >= threshold;
  }

  void save(std::ostream& os) const {
    os.write("ENGM", 4);
    bin::write_int<std::uint16_t>(os, 1);
    bin::write_int<std::uint32_t>(os, logistic.dimension);
    for (double w : logistic.weights) bin::write_f64(os, w);
    bin::write_f64(os, logistic.bias);

    bin::write_int<std::uint32_t>(os, static_cast<std::uint32_t>(standardizer.indices().size()));
    for (std::uint32_t idx : standardizer.indices()) bin::write_int<std::uint32_t>(os, idx);
    for (double v : standardizer.mean()) bin::write_f64(os, v);
    for (double v : standardizer.stddev()) bin::write_f64(os, v);

    bin::write_int<std::uint32_t>(os, static_cast<std::uint32_t>(feature_names.size()));
    for (const std::string& n : feature_names) bin::write_string(os, n);
    for (features::FeatureGroup g : feature_groups)
      bin::write_int<std::uint8_t>(os, static_cast<std::uint8_t>(g));
    bin::write_string(os, toggles);

    bin::write_f64(os, config.l2_strength);
    bin::write_f64(os, config.learning_rate);
    bin::write_int<std::uint32_t>(os, config.max_epochs);
    bin::write_f64(os, config.tolerance);
    bin::write_int<std::uint64_t>(os, config.seed);
    bin::write_int<std::uint8_t>(os, static_cast<std::uint8_t>(config.class_weight));
  }

  static EngagementModel load(std::istream& is) {
    bin::Reader r(is);
    char magic[4];
    r.read_bytes(magic, 4);
    if (std::string_view(magic, 4) != "ENGM")
      throw FormatError("bad model magic; expected ENGM", 0);
    std::uint16_t version = r.read_int<std::uint16_t>();
    if (version != 1) throw FormatError("unsupported model version", r.offset());

    EngagementModel m;
    m.logistic.dimension = r.read_int<std::uint32_t>();
    m.logistic.weights.resize(m.logistic.dimension);
    for (double& w : m.logistic.weights) w = r.read_f64();
    m.logistic.bias = r.read_f64();

    std::uint32_t dense = r.read_int<std::uint32_t>();
    if (dense > m.logistic.dimension) throw FormatError("dense column count out of range", r.offset());
    std::vector<std::uint32_t> indices(dense);
    for (std::uint32_t& idx : indices) {
      idx = r.read_int<std::uint32_t>();
      if (idx >= m.logistic.dimension) throw FormatError("dense index out of range", r.offset());
    }
    std::vector<double> mean(dense), stddev(dense);
    for (double& v : mean) v = r.read_f64();
    for (double& v : stddev) v = r.read_f64();
    m.standardizer = Standardizer(m.logistic.dimension, std::move(indices), std::move(mean),
                                  std::move(stddev));

    std::uint32_t names = r.read_int<std::uint32_t>();
    if (names != m.logistic.dimension) throw FormatError("sidecar size mismatch", r.offset());
    m.feature_names.resize(names);
    for (std::string& n : m.feature_names) n = r.read_string();
    m.feature_groups.resize(names);
    for (features::FeatureGroup& g : m.feature_groups) {
      std::uint8_t raw = r.read_int<std::uint8_t>();
      if (raw >= features::kFeatureGroupCount) throw FormatError("bad feature group", r.offset());
      g = static_cast<features::FeatureGroup>(raw);
    }
    m.toggles = r.read_string();

    m.config.l2_strength = r.read_f64();
    m.config.learning_rate = r.read_f64();
    m.config.max_epochs = r.read_int<std::uint32_t>();
    m.config.tolerance = r.read_f64();
    m.config.seed = r.read_int<std::uint64_t>();
    m.config.class_weight = static_cast<TrainConfig::ClassWeight>(r.read_int<std::uint8_t>());
    return m;
  }
};

}  // namespace engage::model

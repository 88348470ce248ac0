#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiros/dataset/classes.hpp"
#include "hiros/error.hpp"

namespace hiros::eval {

// K x K counts; rows are true classes, columns are predictions.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t k) : k_(k), counts_(k * k, 0) {}

  std::size_t classes() const noexcept { return k_; }
  std::uint64_t& at(std::size_t row, std::size_t col) { return counts_[row * k_ + col]; }
  std::uint64_t at(std::size_t row, std::size_t col) const { return counts_[row * k_ + col]; }

  std::uint64_t row_sum(std::size_t r) const {
    std::uint64_t s = 0;
    for (std::size_t c = 0; c < k_; ++c) s += at(r, c);
    return s;
  }
  std::uint64_t col_sum(std::size_t c) const {
    std::uint64_t s = 0;
    for (std::size_t r = 0; r < k_; ++r) s += at(r, c);
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < k_; ++i) s += at(i, i);
    return s;
  }
  std::uint64_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_ = 0;
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, std::size_t k) {
  if (preds.size() != labels.size()) {
    throw InputError("confusion: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (k == 0) throw InputError("confusion: class count must be positive");
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i], l = labels[i];
    if (p < 0 || l < 0 || static_cast<std::size_t>(p) >= k || static_cast<std::size_t>(l) >= k) {
      throw InputError("confusion: entry " + std::to_string(i) + " (label " + std::to_string(l) +
                       ", prediction " + std::to_string(p) + ") outside [0, " + std::to_string(k) + ")");
    }
    ++cm.at(static_cast<std::size_t>(l), static_cast<std::size_t>(p));
  }
  return cm;
}

struct ClassMetrics {
  std::vector<double> precision;
  std::vector<double> recall;
};

// 0/0 is reported as 0.
inline ClassMetrics metrics(const ConfusionMatrix& cm) {
  ClassMetrics m;
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    const double tp = static_cast<double>(cm.at(i, i));
    const auto rs = cm.row_sum(i), cs = cm.col_sum(i);
    m.recall.push_back(rs == 0 ? 0.0 : tp / static_cast<double>(rs));
    m.precision.push_back(cs == 0 ? 0.0 : tp / static_cast<double>(cs));
  }
  return m;
}

inline double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw InputError("accuracy: confusion matrix is empty");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

struct PooledAccuracy {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single fold

  // "a±b%" with one decimal, e.g. "83.0±3.2%".
  std::string str() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f±%.1f%%", 100.0 * mean, 100.0 * stddev);
    return buf;
  }
};

inline PooledAccuracy pooled_cv(std::span<const double> fold_accuracy) {
  if (fold_accuracy.empty()) throw InputError("pooled_cv: no fold accuracies");
  const double n = static_cast<double>(fold_accuracy.size());
  PooledAccuracy r;
  r.mean = std::accumulate(fold_accuracy.begin(), fold_accuracy.end(), 0.0) / n;
  if (fold_accuracy.size() > 1) {
    double ss = 0.0;
    for (double a : fold_accuracy) ss += (a - r.mean) * (a - r.mean);
    r.stddev = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

struct PruneResult {
  std::vector<int> retained;
  std::vector<int> pruned;
  double restricted_accuracy = 0.0;
};

// Drops command classes whose recall is below `threshold`; background classes
// are always kept. Accuracy is then measured on the rows of retained classes
// while predictions still range over every label.
inline PruneResult prune_by_recall(const ConfusionMatrix& cm,
                                   std::span<const dataset::GestureClass> table = dataset::kClassTable,
                                   double threshold = 0.85) {
  if (cm.classes() > table.size()) {
    throw InputError("prune_by_recall: matrix has more classes than the class table");
  }
  const ClassMetrics m = metrics(cm);
  PruneResult r;
  std::uint64_t hit = 0, rows = 0;
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    const bool keep = table[i].kind == dataset::ClassKind::kBackground || m.recall[i] >= threshold;
    if (keep) {
      r.retained.push_back(static_cast<int>(i));
      hit += cm.at(i, i);
      rows += cm.row_sum(i);
    } else {
      r.pruned.push_back(static_cast<int>(i));
    }
  }
  if (r.retained.empty()) throw ResultError("prune_by_recall: every class fell below the recall threshold");
  r.restricted_accuracy = rows == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(rows);
  return r;
}

inline std::string class_label(std::size_t i) {
  return i < dataset::kNumClasses ? std::string(dataset::kClassTable[i].label) : "class " + std::to_string(i);
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace detail

// Header row of class labels, then one row per true class prefixed with its label.
inline std::string to_csv(const ConfusionMatrix& cm) {
  std::string out = "true\\pred";
  for (std::size_t c = 0; c < cm.classes(); ++c) out += "," + detail::csv_field(class_label(c));
  out += '\n';
  for (std::size_t r = 0; r < cm.classes(); ++r) {
    out += detail::csv_field(class_label(r));
    for (std::size_t c = 0; c < cm.classes(); ++c) out += "," + std::to_string(cm.at(r, c));
    out += '\n';
  }
  return out;
}

inline nlohmann::json to_json(const ConfusionMatrix& cm) {
  nlohmann::json labels = nlohmann::json::array(), rows = nlohmann::json::array();
  for (std::size_t r = 0; r < cm.classes(); ++r) {
    labels.push_back(class_label(r));
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < cm.classes(); ++c) row.push_back(cm.at(r, c));
    rows.push_back(std::move(row));
  }
  return {{"labels", labels}, {"counts", rows}};
}

inline nlohmann::json to_json(const ClassMetrics& m) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < m.recall.size(); ++i) {
    out.push_back({{"class_id", i}, {"label", class_label(i)}, {"precision", m.precision[i]},
                   {"recall", m.recall[i]}});
  }
  return out;
}

}  // namespace hiros::eval

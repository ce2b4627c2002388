#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "irecs/common.hpp"

namespace irecs {

/// Positive class = true (paper selected as a primary study).
struct ConfusionMatrix {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(const std::vector<bool>& predictions, const std::vector<bool>& truths) {
  if (predictions.size() != truths.size()) {
    throw ParameterError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(truths.size()) + " labels");
  }
  if (truths.empty()) throw ParameterError("confusion: no records");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i]) (predictions[i] ? cm.tp : cm.fn)++;
    else (predictions[i] ? cm.fp : cm.tn)++;
  }
  return cm;
}

/// nullopt marks a metric whose denominator is zero.
using Metric = std::optional<double>;

struct MetricsReport {
  Metric recall, precision, specificity, accuracy, balanced_accuracy;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline constexpr const char* kMetricNames[] = {"recall", "precision", "specificity", "accuracy", "balanced_accuracy"};

inline Metric MetricsReport::* const kMetricFields[] = {&MetricsReport::recall, &MetricsReport::precision,
                                                        &MetricsReport::specificity, &MetricsReport::accuracy,
                                                        &MetricsReport::balanced_accuracy};

inline MetricsReport metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ParameterError("metrics: empty confusion matrix");
  auto ratio = [](std::size_t num, std::size_t den) -> Metric {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  MetricsReport r;
  r.recall = ratio(cm.tp, cm.tp + cm.fn);
  r.precision = ratio(cm.tp, cm.tp + cm.fp);
  r.specificity = ratio(cm.tn, cm.tn + cm.fp);
  r.accuracy = ratio(cm.tp + cm.tn, cm.total());
  if (r.recall && r.specificity) r.balanced_accuracy = (*r.recall + *r.specificity) / 2.0;
  return r;
}

/// Shortest text that parses back to the same double; "NA" when undefined.
inline std::string format_metric(const Metric& m) {
  if (!m) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *m);
  return buf;
}

inline Metric parse_metric(std::string_view s) {
  if (s == "NA") return std::nullopt;
  try {
    std::size_t used = 0;
    const std::string str(s);
    const double v = std::stod(str, &used);
    if (used != str.size()) throw LoadError("bad metric value '" + str + "'");
    return v;
  } catch (const std::logic_error&) {
    throw LoadError("bad metric value '" + std::string(s) + "'");
  }
}

struct Summary {
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t n = 0;
  std::size_t excluded = 0;  // undefined values left out
};

/// Mean and sample standard deviation over the defined values, in order.
inline Summary summarize(const std::vector<Metric>& values) {
  Summary s;
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) {
      ++s.excluded;
      continue;
    }
    sum += *v;
    ++s.n;
  }
  if (s.n == 0) return s;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double sq = 0.0;
    for (const auto& v : values) {
      if (v) sq += (*v - s.mean) * (*v - s.mean);
    }
    s.stdev = std::sqrt(sq / static_cast<double>(s.n - 1));
  }
  return s;
}

}  // namespace irecs

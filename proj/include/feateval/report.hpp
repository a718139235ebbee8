#pragma once

// Run-level aggregation of evaluation reports.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "feateval/pipeline.hpp"

namespace feateval {

inline constexpr std::array<const char*, 4> kMetricNames = {"clarity", "responsiveness", "purity", "faithfulness"};

/// Metric i (in kMetricNames order) of a report.
const MetricValue& metric_at(const EvaluationReport& report, std::size_t i);

struct MetricSummary {
  std::size_t present = 0;
  std::size_t absent = 0;
  double mean = 0.0;
  double median = 0.0;
  std::vector<std::size_t> histogram;  // uniform bins over [0, 1], last bin closed
};

struct RunSummary {
  std::size_t n_features = 0;
  std::size_t n_complete = 0;
  std::size_t gated = 0;  // features whose Faithfulness was skipped by the gate
  std::string config_hash;
  std::size_t bins = 50;
  std::array<MetricSummary, 4> metrics;

  nlohmann::json to_json() const;
  /// Tab-separated: bin_low, bin_high, then one count column per metric.
  std::string histogram_table() const;
};

/// Means and medians over present values only. Order of reports does not
/// matter. Throws EmptyRun without reports.
RunSummary summarize(std::span<const EvaluationReport> reports, std::size_t bins = 50);

/// Product-moment correlation of x and y; nullopt with fewer than two points
/// or zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// 4x4 pairwise correlations over features where both metrics are present;
/// diagonal 1. Throws CorrelationUndefined unless at least 3 reports have all
/// four metrics.
std::array<std::array<std::optional<double>, 4>, 4> correlate(std::span<const EvaluationReport> reports);

std::string correlation_table(const std::array<std::array<std::optional<double>, 4>, 4>& matrix);

}  // namespace feateval

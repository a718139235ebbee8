#include "feateval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "feateval/error.hpp"

namespace feateval {

using nlohmann::json;

const MetricValue& metric_at(const EvaluationReport& report, std::size_t i) {
  switch (i) {
    case 0: return report.clarity;
    case 1: return report.responsiveness;
    case 2: return report.purity;
    default: return report.faithfulness;
  }
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

RunSummary summarize(std::span<const EvaluationReport> reports, std::size_t bins) {
  if (reports.empty()) throw Error(ErrorCode::kEmptyRun, "no reports to summarize");
  if (bins == 0) throw ConfigError("bins", "must be at least 1");
  RunSummary s;
  s.n_features = reports.size();
  s.bins = bins;

  std::vector<std::string> hashes;
  for (const auto& r : reports) {
    s.n_complete += r.complete();
    s.gated += r.faithfulness.present() && !r.gate_passed;
    hashes.push_back(r.config_hash);
  }
  std::sort(hashes.begin(), hashes.end());
  hashes.erase(std::unique(hashes.begin(), hashes.end()), hashes.end());
  s.config_hash = hashes.size() == 1 ? hashes.front() : "mixed";

  for (std::size_t m = 0; m < 4; ++m) {
    auto& out = s.metrics[m];
    out.histogram.assign(bins, 0);
    std::vector<double> values;
    for (const auto& r : reports) {
      const auto& v = metric_at(r, m);
      if (!v.present()) {
        ++out.absent;
        continue;
      }
      values.push_back(*v.value);
    }
    out.present = values.size();
    if (values.empty()) continue;
    // Sorting first makes the sum independent of report order.
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    const std::size_t n = values.size();
    out.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    for (double v : values) {
      auto b = static_cast<std::size_t>(std::floor(std::clamp(v, 0.0, 1.0) * static_cast<double>(bins)));
      out.histogram[std::min(b, bins - 1)] += 1;
    }
  }
  return s;
}

json RunSummary::to_json() const {
  json m = json::object();
  for (std::size_t i = 0; i < 4; ++i) {
    m[kMetricNames[i]] = {{"present", metrics[i].present},
                          {"absent", metrics[i].absent},
                          {"mean", metrics[i].mean},
                          {"median", metrics[i].median},
                          {"histogram", metrics[i].histogram}};
  }
  return {{"n_features", n_features}, {"n_complete", n_complete}, {"faithfulness_gated", gated},
          {"config_hash", config_hash}, {"bins", bins}, {"metrics", m}};
}

std::string RunSummary::histogram_table() const {
  std::string out = "bin_low\tbin_high";
  for (auto name : kMetricNames) out += std::string("\t") + name;
  out += "\n";
  for (std::size_t b = 0; b < bins; ++b) {
    out += fmt(static_cast<double>(b) / static_cast<double>(bins)) + "\t" +
           fmt(static_cast<double>(b + 1) / static_cast<double>(bins));
    for (const auto& m : metrics) out += "\t" + std::to_string(m.histogram.empty() ? 0 : m.histogram[b]);
    out += "\n";
  }
  return out;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::array<std::array<std::optional<double>, 4>, 4> correlate(std::span<const EvaluationReport> reports) {
  std::size_t full = 0;
  for (const auto& r : reports) {
    bool all = true;
    for (std::size_t m = 0; m < 4; ++m) all = all && metric_at(r, m).present();
    full += all;
  }
  if (full < 3) {
    throw Error(ErrorCode::kCorrelationUndefined,
                "need at least 3 reports with all metrics present, have " + std::to_string(full));
  }
  std::array<std::array<std::optional<double>, 4>, 4> out{};
  for (std::size_t a = 0; a < 4; ++a) {
    out[a][a] = 1.0;
    for (std::size_t b = a + 1; b < 4; ++b) {
      std::vector<double> x, y;
      for (const auto& r : reports) {
        const auto& va = metric_at(r, a);
        const auto& vb = metric_at(r, b);
        if (va.present() && vb.present()) {
          x.push_back(*va.value);
          y.push_back(*vb.value);
        }
      }
      out[a][b] = out[b][a] = pearson(x, y);
    }
  }
  return out;
}

std::string correlation_table(const std::array<std::array<std::optional<double>, 4>, 4>& matrix) {
  std::string out = "metric";
  for (auto name : kMetricNames) out += std::string("\t") + name;
  out += "\n";
  for (std::size_t a = 0; a < 4; ++a) {
    out += kMetricNames[a];
    for (std::size_t b = 0; b < 4; ++b) out += "\t" + (matrix[a][b] ? fmt(*matrix[a][b]) : std::string("NA"));
    out += "\n";
  }
  return out;
}

}  // namespace feateval

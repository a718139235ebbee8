#include "feateval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "feateval/error.hpp"

namespace feateval::metrics {

std::uint64_t doubled_pair_wins(const std::vector<double>& concept_samples,
                                const std::vector<double>& non_concept_samples) {
  std::vector<double> sorted = non_concept_samples;
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t count2 = 0;
  for (double a : concept_samples) {
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), a);
    auto hi = std::upper_bound(lo, sorted.end(), a);
    count2 += 2 * static_cast<std::uint64_t>(lo - sorted.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  return count2;
}

double gini_abs(const ActivationSampleSets& sets) {
  if (sets.concept_samples.empty() || sets.non_concept_samples.empty()) {
    throw Error(ErrorCode::kEmptySampleSet, "Gini needs both concept and non-concept activations");
  }
  const double pairs = static_cast<double>(sets.concept_samples.size()) * static_cast<double>(sets.non_concept_samples.size());
  const auto count2 = static_cast<double>(doubled_pair_wins(sets.concept_samples, sets.non_concept_samples));
  // |2U - 1| with U = count2 / (2 * pairs).
  return std::fabs(count2 - pairs) / pairs;
}

AveragePrecision average_precision(const ActivationSampleSets& sets) {
  if (sets.concept_samples.empty()) throw Error(ErrorCode::kEmptySampleSet, "average precision needs concept activations");
  struct Scored {
    double score;
    bool positive;
  };
  std::vector<Scored> all;
  all.reserve(sets.concept_samples.size() + sets.non_concept_samples.size());
  for (double a : sets.concept_samples) all.push_back({a, true});
  for (double a : sets.non_concept_samples) all.push_back({a, false});
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });

  const auto positives = static_cast<double>(sets.concept_samples.size());
  AveragePrecision ap;
  std::uint64_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    const double threshold = all[i].score;
    for (; i < all.size() && all[i].score == threshold; ++i) (all[i].positive ? tp : fp) += 1;
    const double recall = static_cast<double>(tp) / positives;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap.value += (recall - prev_recall) * precision;
    ap.curve.push_back({threshold, precision, recall});
    prev_recall = recall;
  }
  return ap;
}

SteeringProfile::SteeringProfile(std::vector<double> factors, std::vector<double> proportions)
    : factors_(std::move(factors)), proportions_(std::move(proportions)) {
  if (factors_.size() != proportions_.size()) throw ConfigError("steering_profile", "factor and proportion counts differ");
  auto zeros = std::count(factors_.begin(), factors_.end(), 0.0);
  if (zeros != 1) throw ConfigError("steering_factors", "must contain 0 exactly once");
  base_index_ = static_cast<std::size_t>(std::find(factors_.begin(), factors_.end(), 0.0) - factors_.begin());
  for (double r : proportions_) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("steering_profile", "proportions must lie in [0, 1]");
  }
}

double faithfulness(const SteeringProfile& profile) {
  const double base = profile.base_rate();
  if (base >= 1.0) return 0.0;
  const double best = *std::max_element(profile.proportions().begin(), profile.proportions().end());
  return std::max(best - base, 0.0) / (1.0 - base);
}

double combined_score(const std::array<double, 4>& values, CombineMode mode,
                      const std::optional<std::array<double, 4>>& weights) {
  std::array<double, 4> w{0.25, 0.25, 0.25, 0.25};
  if (weights) {
    double sum = 0.0;
    for (double x : *weights) {
      if (!(x >= 0.0)) throw ConfigError("combined.weights", "weights must be non-negative");
      sum += x;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("combined.weights", "weights must sum to 1");
    w = *weights;
  }
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("combined.values", "metric values must lie in [0, 1]");
  }
  double out = 0.0;
  switch (mode) {
    case CombineMode::kWeighted:
      for (std::size_t i = 0; i < 4; ++i) out += w[i] * values[i];
      break;
    case CombineMode::kGeometric: {
      double log_sum = 0.0;
      for (std::size_t i = 0; i < 4; ++i) {
        if (w[i] == 0.0) continue;
        if (values[i] == 0.0) return 0.0;
        log_sum += w[i] * std::log(values[i]);
      }
      out = std::exp(log_sum);
      break;
    }
    case CombineMode::kHarmonic: {
      double denom = 0.0;
      for (std::size_t i = 0; i < 4; ++i) {
        if (w[i] == 0.0) continue;
        if (values[i] == 0.0) return 0.0;
        denom += w[i] / values[i];
      }
      out = 1.0 / denom;
      break;
    }
  }
  return std::clamp(out, 0.0, 1.0);
}

}  // namespace feateval::metrics

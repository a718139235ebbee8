#pragma once

// Alignment metrics between a feature's activations and a concept.
// All functions are pure.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace feateval::metrics {

/// Activations on concept samples (A_c) and non-concept samples (A_n).
struct ActivationSampleSets {
  std::vector<double> concept_samples;
  std::vector<double> non_concept_samples;
};

/// Twice the Mann-Whitney U count: sum over all (c, n) pairs of
/// 2*[c > n] + [c == n]. Exact integer, O((m + n) log(m + n)).
std::uint64_t doubled_pair_wins(const std::vector<double>& concept_samples, const std::vector<double>& non_concept_samples);

/// Absolute Gini coefficient |2U - 1| with U the pairwise win rate of concept
/// over non-concept activations, ties counted as one half. Invariant under
/// strictly increasing transforms and symmetric in its two arguments.
/// Throws EmptySampleSet if either set is empty.
double gini_abs(const ActivationSampleSets& sets);

struct PrecisionRecallPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct AveragePrecision {
  double value = 0.0;
  /// One point per distinct activation value, thresholds descending.
  std::vector<PrecisionRecallPoint> curve;
};

/// Step-wise average precision sum_j (r_j - r_{j-1}) p_j with r_{-1} = 0,
/// thresholds at every distinct activation (ties form one step). Concept
/// samples are the positives. Throws EmptySampleSet without positives.
AveragePrecision average_precision(const ActivationSampleSets& sets);

/// Proportions of concept-bearing outputs per steering factor; the factor 0
/// entry is the zeroed-feature base rate.
class SteeringProfile {
 public:
  /// Throws ConfigError unless factors contains 0 exactly once, sizes match,
  /// and proportions lie in [0, 1].
  SteeringProfile(std::vector<double> factors, std::vector<double> proportions);

  const std::vector<double>& factors() const { return factors_; }
  const std::vector<double>& proportions() const { return proportions_; }
  std::size_t base_index() const { return base_index_; }
  double base_rate() const { return proportions_[base_index_]; }

 private:
  std::vector<double> factors_;
  std::vector<double> proportions_;
  std::size_t base_index_ = 0;
};

/// max(max(R) - R0, 0) / (1 - R0), and 0 when R0 == 1.
double faithfulness(const SteeringProfile& profile);

enum class CombineMode { kWeighted, kGeometric, kHarmonic };

/// Mean of (clarity, responsiveness, purity, faithfulness). Weights, when
/// given, must be non-negative and sum to 1; weighted mode defaults to equal
/// weights. Geometric and harmonic means are 0 when any weighted input is 0.
double combined_score(const std::array<double, 4>& values, CombineMode mode,
                      const std::optional<std::array<double, 4>>& weights = std::nullopt);

}  // namespace feateval::metrics

#pragma once

// Per-(feature, description) evaluation: synthetic samples -> Clarity;
// percentile-stratified rating -> Responsiveness and Purity; gated steering
// sweep -> Faithfulness.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "feateval/corpus.hpp"
#include "feateval/describer.hpp"
#include "feateval/judge.hpp"
#include "feateval/metrics.hpp"
#include "feateval/provider.hpp"

namespace feateval {

struct EvaluationConfig {
  std::size_t n_synth_requests = 15;
  std::size_t n_rated_samples = 500;
  std::size_t n_top_stratum = 50;
  /// Percentile ranges [lo, hi) of the absolute-aggregate ranking; the last
  /// range is closed. Must tile [0, 100] in increasing order.
  std::vector<std::pair<double, double>> percentile_strata = {{0, 50}, {50, 75}, {75, 95}, {95, 100}};
  std::size_t rating_batch_size = 15;
  std::size_t min_concept_samples = 15;
  double faithfulness_gate_threshold = 0.5;
  std::vector<double> steering_factors = {-50, -10, -1, 0, 1, 10, 50};
  std::size_t n_steering_prompts = 50;
  std::size_t steering_max_new_tokens = 30;
  /// Uniform control draw size for Clarity; 0 uses the whole corpus.
  std::size_t clarity_control_count = 0;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static EvaluationConfig from_json(const nlohmann::json& j);
  std::string hash() const;
};

/// Per-feature seed; independent of evaluation order.
std::uint64_t feature_seed(std::uint64_t run_seed, const FeatureHandle& feature);

struct StrataSample {
  std::vector<std::uint64_t> ids;  // top stratum first, then each percentile stratum
  std::size_t top = 0;
  std::vector<std::size_t> per_stratum;
  std::size_t shortfall = 0;  // quota moved to neighbouring strata
  bool degenerate = false;    // all aggregates equal
};

/// Stratum quotas: n_total - n_top split over the strata by cumulative floor,
/// e.g. 450 over four strata gives 112, 113, 112, 113.
std::vector<std::size_t> stratum_quotas(std::size_t total, std::size_t n_strata);

/// The n_top_stratum highest absolute aggregates (ties to the lower id), then
/// seeded draws without replacement from each percentile stratum. Positions
/// are ranks in ascending order of aggregate with ties broken by a seeded
/// hash of the id. A short stratum passes its deficit to the next lower
/// stratum, then upward. Ids in `exclude` are never drawn.
StrataSample sample_strata(std::span<const double> abs_aggregates, const EvaluationConfig& config, std::uint64_t seed,
                           const std::unordered_set<std::uint64_t>& exclude = {});

/// A metric value or the reason it is missing.
struct MetricValue {
  std::optional<double> value;
  std::string absent_reason;

  static MetricValue of(double v) { return {v, {}}; }
  static MetricValue absent(std::string reason) { return {std::nullopt, std::move(reason)}; }
  bool present() const { return value.has_value(); }
};

struct EvaluationCounts {
  std::size_t synthetic_requests = 0;
  std::size_t synthetic_failed_requests = 0;
  std::size_t synthetic_kept = 0;
  std::size_t synthetic_duplicates = 0;
  std::size_t control_samples = 0;
  std::size_t rating_rounds = 0;
  std::size_t rated_sent = 0;
  std::size_t rated = 0;
  std::size_t rating_2 = 0;
  std::size_t rating_1 = 0;
  std::size_t rating_0 = 0;
  std::size_t dropped = 0;
  std::size_t strata_shortfall = 0;
  std::size_t steering_prompts = 0;
  std::size_t steering_rated = 0;
  std::size_t steering_dropped = 0;
};

struct ProviderUsage {
  std::uint64_t activation_calls = 0;
  std::uint64_t activation_texts = 0;
  std::uint64_t generate_calls = 0;
  std::uint64_t logit_calls = 0;
};

struct StageError {
  std::string stage;
  std::string code;
  std::string message;
};

struct EvaluationReport {
  FeatureHandle feature;
  std::string description;
  std::string description_method = "external";
  MetricValue clarity, responsiveness, purity, faithfulness;
  bool gate_passed = false;
  std::vector<double> steering_factors;
  std::vector<double> steering_proportions;
  EvaluationCounts counts;
  JudgeUsage judge_usage;
  ProviderUsage provider_usage;
  std::vector<StageError> errors;
  std::vector<std::string> warnings;
  // provenance
  std::string judge_model;
  std::string provider_id;
  std::string config_hash;
  std::uint64_t run_seed = 0;
  std::uint64_t seed = 0;
  std::optional<double> judge_temperature;

  /// All four metrics present and no stage error.
  bool complete() const;
  nlohmann::json to_json() const;
  static EvaluationReport from_json(const nlohmann::json& j);
};

/// Everything an evaluation talks to. Aggregates for a feature may be
/// supplied from a scan cache; otherwise the corpus is scanned.
struct EvaluationContext {
  Provider& provider;
  ChatBackend& judge;
  const Corpus& corpus;
  JudgeOptions judge_options;
  std::function<std::optional<std::vector<TraceAggregate>>(const FeatureHandle&)> cached_aggregates;
};

struct ClarityResult {
  MetricValue clarity;
  metrics::ActivationSampleSets sets;
};

struct RatedSetResult {
  MetricValue responsiveness;
  MetricValue purity;
  metrics::ActivationSampleSets sets;
  std::vector<ConceptRating> ratings;
};

// Individual stages. `fseed` is the per-feature seed; counts are accumulated.
ClarityResult eval_clarity(Provider& provider, JudgeClient& judge, const FeatureHandle& feature,
                           const std::string& description, std::span<const TraceAggregate> aggregates,
                           const Corpus& corpus, const EvaluationConfig& config, std::uint64_t fseed,
                           EvaluationCounts& counts);

RatedSetResult eval_responsiveness_purity(JudgeClient& judge, const std::string& description,
                                          std::span<const TraceAggregate> aggregates, const Corpus& corpus,
                                          const EvaluationConfig& config, std::uint64_t fseed,
                                          EvaluationCounts& counts, std::vector<std::string>& warnings);

struct FaithfulnessResult {
  MetricValue faithfulness;
  bool gate_passed = false;
  std::vector<double> proportions;
};

FaithfulnessResult eval_faithfulness(Provider& provider, JudgeClient& judge, const FeatureHandle& feature,
                                     const std::string& description, const MetricValue& clarity,
                                     const MetricValue& responsiveness, const Corpus& corpus,
                                     const EvaluationConfig& config, std::uint64_t fseed, EvaluationCounts& counts);

/// Runs all stages; stage errors are recorded in the report, never thrown
/// (ConfigError excepted).
EvaluationReport evaluate(const Description& description, const EvaluationConfig& config, EvaluationContext& ctx);

/// Evaluates descriptions in parallel over up to `workers` threads. Reports
/// come back in input order; on_done (if set) is called serially as each
/// finishes.
std::vector<EvaluationReport> evaluate_all(std::span<const Description> descriptions, const EvaluationConfig& config,
                                           EvaluationContext& ctx, std::size_t workers,
                                           const std::function<void(const EvaluationReport&)>& on_done = {});

}  // namespace feateval

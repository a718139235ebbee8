#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "feateval/corpus.hpp"
#include "feateval/text.hpp"

namespace feateval {

enum class FeatureKind { kNeuron, kSaeLatent };

std::string_view feature_kind_name(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view name);

/// Addresses one scalar feature inside a subject model.
struct FeatureHandle {
  std::string model_id;
  std::uint32_t layer = 0;
  FeatureKind kind = FeatureKind::kNeuron;
  std::uint64_t index = 0;
  /// Largest activation seen on the natural dataset; required to steer SAE latents.
  std::optional<double> max_observed_activation;

  /// "model/layer/kind/index", e.g. "planted/0/neuron/3". Kind is "neuron" or "sae".
  std::string key() const;
  static FeatureHandle parse(std::string_view key);

  friend bool operator==(const FeatureHandle& a, const FeatureHandle& b) {
    return a.model_id == b.model_id && a.layer == b.layer && a.kind == b.kind && a.index == b.index;
  }
};

/// Per-token activations of one feature on one text.
///
/// Two per-sequence summaries are kept: `aggregate` is max |a| and drives
/// ranking and percentile strata, `signed_max` is max a and feeds the
/// metrics. Both are recomputable from `activations`.
struct ActivationTrace {
  std::uint64_t sentence_id = 0;
  std::vector<std::string> tokens;
  std::vector<text::Span> offsets;  // optional; empty when the provider has none
  std::vector<double> activations;
  double aggregate = 0.0;
  double signed_max = 0.0;

  static ActivationTrace make(std::uint64_t sentence_id, std::vector<std::string> tokens,
                              std::vector<double> activations, std::vector<text::Span> offsets = {});
  void recompute();
};

struct TraceAggregate {
  double signed_max = 0.0;
  double abs_max = 0.0;
};

enum class SteeringMode {
  kMultiply,  // neurons: raw activation times factor
  kPin,       // SAE latents: activation pinned to factor * max_observed_activation
};

struct SteeringSpec {
  FeatureHandle feature;
  double factor = 0.0;
  std::size_t max_new_tokens = 30;

  SteeringMode mode() const {
    return feature.kind == FeatureKind::kSaeLatent ? SteeringMode::kPin : SteeringMode::kMultiply;
  }
  /// The injected latent value in pin mode.
  double pinned_value() const;
  /// Throws ConfigError on max_new_tokens == 0 or a SAE latent without max_observed_activation.
  void validate() const;
};

struct LogitWeightVector {
  std::vector<std::string> vocab;
  std::vector<double> weights;
};

struct ProviderCapabilities {
  bool steering = false;
  bool logit_weights = false;
};

/// Access to the subject model. Implementations must tolerate concurrent
/// calls; they may serialize internally.
class Provider {
 public:
  virtual ~Provider() = default;

  virtual std::string id() const = 0;
  virtual ProviderCapabilities capabilities() const = 0;

  /// One trace per input, order preserved. Throws FeatureNotFound or
  /// ProviderUnavailable.
  virtual std::vector<ActivationTrace> activations(const FeatureHandle& feature,
                                                   std::span<const Sentence> texts) = 0;

  /// One continuation per prompt, at most spec.max_new_tokens tokens each.
  virtual std::vector<std::string> generate_steered(std::span<const Sentence> prompts, const SteeringSpec& spec,
                                                    std::uint64_t seed) = 0;

  /// W_U * W_dec[feature] over the vocabulary. Throws CapabilityMissing.
  virtual LogitWeightVector logit_weights(const FeatureHandle& feature) = 0;
};

/// Counts calls made through it and forwards to another provider.
class CountingProvider : public Provider {
 public:
  explicit CountingProvider(Provider& inner) : inner_(inner) {}

  std::string id() const override { return inner_.id(); }
  ProviderCapabilities capabilities() const override { return inner_.capabilities(); }
  std::vector<ActivationTrace> activations(const FeatureHandle& feature, std::span<const Sentence> texts) override;
  std::vector<std::string> generate_steered(std::span<const Sentence> prompts, const SteeringSpec& spec,
                                            std::uint64_t seed) override;
  LogitWeightVector logit_weights(const FeatureHandle& feature) override;

  std::uint64_t activation_calls() const { return activation_calls_; }
  std::uint64_t activation_texts() const { return activation_texts_; }
  std::uint64_t generate_calls() const { return generate_calls_; }
  std::uint64_t logit_calls() const { return logit_calls_; }

 private:
  Provider& inner_;
  std::atomic<std::uint64_t> activation_calls_{0};
  std::atomic<std::uint64_t> activation_texts_{0};
  std::atomic<std::uint64_t> generate_calls_{0};
  std::atomic<std::uint64_t> logit_calls_{0};
};

}  // namespace feateval

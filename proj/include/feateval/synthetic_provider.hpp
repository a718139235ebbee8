#pragma once

// A planted-feature subject model. Every feature has a known activation rule
// and a known steering response, so the whole engine can run without model
// weights and tests can compute exact expectations.

#include <filesystem>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "feateval/corpus.hpp"
#include "feateval/provider.hpp"

namespace feateval {

/// Fires on a specific token, but only at full strength when one of the
/// context tokens occurs among the preceding `window` word tokens.
struct GatedRule {
  std::string token;
  std::vector<std::string> context;
  std::size_t window = 3;
  double weight = 1.0;
  double ungated_weight = 0.0;
};

/// Emission model for steered generation: each continuation carries a concept
/// token with probability clip(base + slope * factor, 0, 1).
struct SteeringResponse {
  double base = 0.1;
  double slope = 0.015;
  std::vector<std::string> emit;

  double probability(double factor) const;
};

struct PlantedFeature {
  std::uint32_t layer = 0;
  FeatureKind kind = FeatureKind::kNeuron;
  std::uint64_t index = 0;
  std::optional<double> max_observed_activation;
  std::map<std::string, double> lexicon;  // lowercase token -> activation
  std::vector<GatedRule> gated;
  SteeringResponse steering;
  std::vector<double> decoder;  // d_model entries
};

struct PlantedModel {
  std::string model_id = "planted";
  std::vector<std::string> vocab;
  std::vector<std::vector<double>> unembedding;  // d_model rows x vocab columns
  std::vector<std::string> filler;               // continuation words; defaults when empty
  std::vector<PlantedFeature> features;

  static PlantedModel from_json(const nlohmann::json& j);
  static PlantedModel load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

const std::vector<std::string>& default_filler_words();

class SyntheticProvider : public Provider {
 public:
  explicit SyntheticProvider(PlantedModel model);

  std::string id() const override { return "synthetic:" + model_.model_id; }
  ProviderCapabilities capabilities() const override { return {true, !model_.unembedding.empty()}; }

  std::vector<ActivationTrace> activations(const FeatureHandle& feature, std::span<const Sentence> texts) override;

  /// Continuation i is simulated from Rng(derive_seed(seed, i)): one unit
  /// draw u decides emission (u < p(factor)), then max_new_tokens filler
  /// words are drawn, then on emission a position and an emit token.
  std::vector<std::string> generate_steered(std::span<const Sentence> prompts, const SteeringSpec& spec,
                                            std::uint64_t seed) override;

  LogitWeightVector logit_weights(const FeatureHandle& feature) override;

  /// Introspection of the value injected into the feature on each steering call.
  struct SteeringObservation {
    std::string feature_key;
    SteeringMode mode = SteeringMode::kMultiply;
    double factor = 0.0;
    double injected = 0.0;  // pinned value (pin mode) or multiplier (multiply mode)
    std::uint64_t seed = 0;
    std::size_t n_prompts = 0;
  };
  std::vector<SteeringObservation> steering_log() const;

  const PlantedModel& model() const { return model_; }
  FeatureHandle handle(std::size_t i) const;
  /// Activation of one planted feature on one text.
  std::vector<double> token_activations(const PlantedFeature& f, const std::vector<text::Token>& tokens) const;

 private:
  const PlantedFeature& find(const FeatureHandle& feature) const;

  PlantedModel model_;
  mutable std::mutex log_mu_;
  std::vector<SteeringObservation> log_;
};

/// Background sentences plus planted insertions for building test worlds.
struct PlantedInsertion {
  std::vector<std::string> phrases;  // one chosen per inserted sentence
  std::size_t count = 0;
};

struct PlantedCorpusSpec {
  std::size_t n_sentences = 10000;
  std::vector<PlantedInsertion> insertions;
};

/// Deterministic corpus of distinct sentences "<Subject> <verb> <object> <place>."
/// where insertion sentences use a planted phrase as the object. Insertions
/// are scattered at seeded positions.
std::vector<Sentence> make_planted_corpus(const PlantedCorpusSpec& spec, std::uint64_t seed);

}  // namespace feateval

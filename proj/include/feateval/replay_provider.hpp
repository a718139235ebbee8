#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <unordered_map>

#include "feateval/provider.hpp"

namespace feateval {

/// Serves activations recorded in a dump file, so descriptions and
/// evaluations can run without any model.
///
/// Dump format, one JSON record per line:
///   {"type": "trace", "feature": "<key>", "sentence_id": n, "text": "...",
///    "tokens": [...], "activations": [...], "offsets": [[b, e], ...]}
///   {"type": "logit_weights", "feature": "<key>", "vocab": [...], "weights": [...]}
///   {"type": "feature", "feature": "<key>", "max_observed_activation": x}
/// "type" defaults to "trace"; "text" and "offsets" are optional. Lookup is by
/// sentence id, falling back to exact text when the recorded text differs.
class ReplayProvider : public Provider {
 public:
  static ReplayProvider load(const std::filesystem::path& path);
  static ReplayProvider read(std::istream& in, std::string source_name = "stream");

  std::string id() const override { return "replay:" + source_; }
  ProviderCapabilities capabilities() const override { return {false, !logits_.empty()}; }

  std::vector<ActivationTrace> activations(const FeatureHandle& feature, std::span<const Sentence> texts) override;
  std::vector<std::string> generate_steered(std::span<const Sentence> prompts, const SteeringSpec& spec,
                                            std::uint64_t seed) override;
  LogitWeightVector logit_weights(const FeatureHandle& feature) override;

  std::optional<double> max_observed_activation(const FeatureHandle& feature) const;
  std::vector<std::string> feature_keys() const;

  /// One dump line for a trace, with keys in the order the dump uses.
  static std::string record_line(const std::string& feature_key, const ActivationTrace& trace,
                                 const std::string& text = {});

 private:
  struct FeatureRecords {
    std::map<std::uint64_t, ActivationTrace> by_id;
    std::map<std::uint64_t, std::string> text_of;
    std::unordered_map<std::string, std::uint64_t> id_of_text;
    std::optional<double> max_observed;
  };
  const FeatureRecords& find(const FeatureHandle& feature) const;

  std::string source_;
  std::map<std::string, FeatureRecords> features_;
  std::map<std::string, LogitWeightVector> logits_;
};

}  // namespace feateval

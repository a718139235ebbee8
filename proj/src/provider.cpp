#include "feateval/provider.hpp"

#include <charconv>
#include <cmath>

#include "feateval/error.hpp"

namespace feateval {

std::string_view feature_kind_name(FeatureKind kind) { return kind == FeatureKind::kNeuron ? "neuron" : "sae"; }

FeatureKind parse_feature_kind(std::string_view name) {
  if (name == "neuron") return FeatureKind::kNeuron;
  if (name == "sae" || name == "sae_latent") return FeatureKind::kSaeLatent;
  throw ConfigError("feature.kind", "unknown feature kind '" + std::string(name) + "'");
}

std::string FeatureHandle::key() const {
  return model_id + "/" + std::to_string(layer) + "/" + std::string(feature_kind_name(kind)) + "/" +
         std::to_string(index);
}

namespace {

template <typename T>
T parse_number(std::string_view s, const char* what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError("feature", std::string("bad ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

FeatureHandle FeatureHandle::parse(std::string_view key) {
  // model ids may themselves contain '/', so parse from the right.
  auto cut = [&](std::string_view& s) {
    auto pos = s.rfind('/');
    if (pos == std::string_view::npos) throw ConfigError("feature", "expected model/layer/kind/index, got '" + std::string(key) + "'");
    auto tail = s.substr(pos + 1);
    s = s.substr(0, pos);
    return tail;
  };
  std::string_view rest = key;
  auto index = cut(rest);
  auto kind = cut(rest);
  auto layer = cut(rest);
  if (rest.empty()) throw ConfigError("feature", "empty model id in '" + std::string(key) + "'");
  FeatureHandle h;
  h.model_id = std::string(rest);
  h.layer = parse_number<std::uint32_t>(layer, "layer");
  h.kind = parse_feature_kind(kind);
  h.index = parse_number<std::uint64_t>(index, "index");
  return h;
}

ActivationTrace ActivationTrace::make(std::uint64_t sentence_id, std::vector<std::string> tokens,
                                      std::vector<double> activations, std::vector<text::Span> offsets) {
  if (tokens.size() != activations.size()) {
    throw Error(ErrorCode::kProtocolError, "token and activation counts differ");
  }
  if (!offsets.empty() && offsets.size() != tokens.size()) {
    throw Error(ErrorCode::kProtocolError, "token and offset counts differ");
  }
  ActivationTrace t;
  t.sentence_id = sentence_id;
  t.tokens = std::move(tokens);
  t.activations = std::move(activations);
  t.offsets = std::move(offsets);
  t.recompute();
  return t;
}

void ActivationTrace::recompute() {
  aggregate = 0.0;
  signed_max = activations.empty() ? 0.0 : activations.front();
  for (double a : activations) {
    aggregate = std::max(aggregate, std::fabs(a));
    signed_max = std::max(signed_max, a);
  }
}

double SteeringSpec::pinned_value() const { return factor * feature.max_observed_activation.value_or(0.0); }

void SteeringSpec::validate() const {
  if (max_new_tokens == 0) throw ConfigError("steering.max_new_tokens", "must be at least 1");
  if (feature.kind == FeatureKind::kSaeLatent && !feature.max_observed_activation) {
    throw ConfigError("steering.feature", "SAE latent " + feature.key() + " has no max_observed_activation");
  }
}

std::vector<ActivationTrace> CountingProvider::activations(const FeatureHandle& feature,
                                                           std::span<const Sentence> texts) {
  ++activation_calls_;
  activation_texts_ += texts.size();
  return inner_.activations(feature, texts);
}

std::vector<std::string> CountingProvider::generate_steered(std::span<const Sentence> prompts,
                                                            const SteeringSpec& spec, std::uint64_t seed) {
  ++generate_calls_;
  return inner_.generate_steered(prompts, spec, seed);
}

LogitWeightVector CountingProvider::logit_weights(const FeatureHandle& feature) {
  ++logit_calls_;
  return inner_.logit_weights(feature);
}

}  // namespace feateval

#include "feateval/synthetic_provider.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_set>

#include "feateval/error.hpp"
#include "feateval/random.hpp"
#include "feateval/text.hpp"

namespace feateval {

using nlohmann::json;

double SteeringResponse::probability(double factor) const {
  return std::clamp(base + slope * factor, 0.0, 1.0);
}

const std::vector<std::string>& default_filler_words() {
  static const std::vector<std::string> kWords = {
      "the",  "a",    "of",    "and",   "to",   "in",    "it",   "was",   "for",  "on",
      "that", "with", "as",    "at",    "by",   "from",  "this", "they",  "but",  "or",
      "some", "more", "then",  "there", "when", "which", "about", "into", "over", "after"};
  return kWords;
}

PlantedModel PlantedModel::from_json(const json& j) {
  PlantedModel m;
  m.model_id = j.value("model_id", "planted");
  m.vocab = j.value("vocab", std::vector<std::string>{});
  m.unembedding = j.value("unembedding", std::vector<std::vector<double>>{});
  m.filler = j.value("filler", std::vector<std::string>{});
  for (const auto& u : m.unembedding) {
    if (u.size() != m.vocab.size()) throw ConfigError("unembedding", "row length must equal vocab size");
  }
  for (const auto& jf : j.at("features")) {
    PlantedFeature f;
    f.layer = jf.value("layer", 0u);
    f.kind = parse_feature_kind(jf.value("kind", "neuron"));
    f.index = jf.at("index").get<std::uint64_t>();
    if (jf.contains("max_observed_activation")) f.max_observed_activation = jf.at("max_observed_activation").get<double>();
    if (jf.contains("lexicon")) {
      for (auto& [tok, w] : jf.at("lexicon").items()) f.lexicon[text::to_lower_ascii(tok)] = w.get<double>();
    }
    for (const auto& jg : jf.value("gated", json::array())) {
      GatedRule g;
      g.token = text::to_lower_ascii(jg.at("token").get<std::string>());
      for (const auto& c : jg.at("context")) g.context.push_back(text::to_lower_ascii(c.get<std::string>()));
      g.window = jg.value("window", std::size_t{3});
      g.weight = jg.value("weight", 1.0);
      g.ungated_weight = jg.value("ungated_weight", 0.0);
      f.gated.push_back(std::move(g));
    }
    if (jf.contains("steering")) {
      const auto& js = jf.at("steering");
      f.steering.base = js.value("base", 0.1);
      f.steering.slope = js.value("slope", 0.015);
      f.steering.emit = js.value("emit", std::vector<std::string>{});
    }
    f.decoder = jf.value("decoder", std::vector<double>{});
    if (!f.decoder.empty() && f.decoder.size() != m.unembedding.size()) {
      throw ConfigError("features.decoder", "decoder length must equal unembedding rows");
    }
    m.features.push_back(std::move(f));
  }
  return m;
}

PlantedModel PlantedModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read planted model " + path.string());
  return from_json(json::parse(in));
}

json PlantedModel::to_json() const {
  json features_json = json::array();
  for (const auto& f : features) {
    json jf = {{"layer", f.layer}, {"kind", feature_kind_name(f.kind)}, {"index", f.index}};
    if (f.max_observed_activation) jf["max_observed_activation"] = *f.max_observed_activation;
    if (!f.lexicon.empty()) jf["lexicon"] = f.lexicon;
    if (!f.gated.empty()) {
      json gated = json::array();
      for (const auto& g : f.gated) {
        gated.push_back({{"token", g.token},
                         {"context", g.context},
                         {"window", g.window},
                         {"weight", g.weight},
                         {"ungated_weight", g.ungated_weight}});
      }
      jf["gated"] = gated;
    }
    jf["steering"] = {{"base", f.steering.base}, {"slope", f.steering.slope}, {"emit", f.steering.emit}};
    if (!f.decoder.empty()) jf["decoder"] = f.decoder;
    features_json.push_back(std::move(jf));
  }
  json j = {{"model_id", model_id}, {"features", features_json}};
  if (!vocab.empty()) j["vocab"] = vocab;
  if (!unembedding.empty()) j["unembedding"] = unembedding;
  if (!filler.empty()) j["filler"] = filler;
  return j;
}

SyntheticProvider::SyntheticProvider(PlantedModel model) : model_(std::move(model)) {
  if (model_.filler.empty()) model_.filler = default_filler_words();
}

FeatureHandle SyntheticProvider::handle(std::size_t i) const {
  const auto& f = model_.features.at(i);
  FeatureHandle h;
  h.model_id = model_.model_id;
  h.layer = f.layer;
  h.kind = f.kind;
  h.index = f.index;
  h.max_observed_activation = f.max_observed_activation;
  return h;
}

const PlantedFeature& SyntheticProvider::find(const FeatureHandle& feature) const {
  if (feature.model_id == model_.model_id) {
    for (const auto& f : model_.features) {
      if (f.layer == feature.layer && f.kind == feature.kind && f.index == feature.index) return f;
    }
  }
  throw Error(ErrorCode::kFeatureNotFound, feature.key());
}

std::vector<double> SyntheticProvider::token_activations(const PlantedFeature& f,
                                                         const std::vector<text::Token>& tokens) const {
  std::vector<std::string> lower;
  lower.reserve(tokens.size());
  for (const auto& t : tokens) lower.push_back(text::to_lower_ascii(t.text));

  std::vector<double> acts(tokens.size(), 0.0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    double a = 0.0;
    if (auto it = f.lexicon.find(lower[i]); it != f.lexicon.end()) a = std::max(a, it->second);
    for (const auto& g : f.gated) {
      if (lower[i] != g.token) continue;
      bool in_context = false;
      std::size_t seen = 0;
      for (std::size_t j = i; j > 0 && seen < g.window; --j) {
        const auto& prev = lower[j - 1];
        if (prev.empty() || !std::isalnum(static_cast<unsigned char>(prev[0]))) continue;
        ++seen;
        if (std::find(g.context.begin(), g.context.end(), prev) != g.context.end()) in_context = true;
      }
      a = std::max(a, in_context ? g.weight : g.ungated_weight);
    }
    acts[i] = a;
  }
  return acts;
}

std::vector<ActivationTrace> SyntheticProvider::activations(const FeatureHandle& feature,
                                                            std::span<const Sentence> texts) {
  const auto& f = find(feature);
  std::vector<ActivationTrace> out;
  out.reserve(texts.size());
  for (const auto& s : texts) {
    auto tokens = text::tokenize(s.text);
    auto acts = token_activations(f, tokens);
    std::vector<std::string> strs;
    std::vector<text::Span> spans;
    strs.reserve(tokens.size());
    spans.reserve(tokens.size());
    for (auto& t : tokens) {
      strs.push_back(std::move(t.text));
      spans.push_back(t.span);
    }
    out.push_back(ActivationTrace::make(s.id, std::move(strs), std::move(acts), std::move(spans)));
  }
  return out;
}

std::vector<std::string> SyntheticProvider::generate_steered(std::span<const Sentence> prompts,
                                                             const SteeringSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto& f = find(spec.feature);
  if (f.steering.emit.empty()) throw Error(ErrorCode::kSteeringUnsupported, spec.feature.key() + " has no emission lexicon");
  {
    std::lock_guard lock(log_mu_);
    log_.push_back({spec.feature.key(), spec.mode(), spec.factor,
                    spec.mode() == SteeringMode::kPin ? spec.pinned_value() : spec.factor, seed, prompts.size()});
  }
  const double p = f.steering.probability(spec.factor);
  const auto& filler = model_.filler;
  std::vector<std::string> out;
  out.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const bool emit = uniform_unit(rng) < p;
    std::vector<std::string> words(spec.max_new_tokens);
    for (auto& w : words) w = filler[uniform_below(rng, filler.size())];
    if (emit) {
      auto pos = uniform_below(rng, words.size());
      words[pos] = f.steering.emit[uniform_below(rng, f.steering.emit.size())];
    }
    std::string text;
    for (const auto& w : words) {
      if (!text.empty()) text.push_back(' ');
      text += w;
    }
    out.push_back(std::move(text));
  }
  return out;
}

LogitWeightVector SyntheticProvider::logit_weights(const FeatureHandle& feature) {
  const auto& f = find(feature);
  if (model_.unembedding.empty() || f.decoder.empty()) {
    throw Error(ErrorCode::kCapabilityMissing, "no unembedding for " + feature.key());
  }
  LogitWeightVector v;
  v.vocab = model_.vocab;
  v.weights.assign(model_.vocab.size(), 0.0);
  for (std::size_t d = 0; d < model_.unembedding.size(); ++d) {
    for (std::size_t t = 0; t < v.weights.size(); ++t) v.weights[t] += model_.unembedding[d][t] * f.decoder[d];
  }
  return v;
}

std::vector<SyntheticProvider::SteeringObservation> SyntheticProvider::steering_log() const {
  std::lock_guard lock(log_mu_);
  return log_;
}

// ---------------------------------------------------------------------------
// Planted corpora

namespace {

const std::vector<std::string> kSubjects = {
    "The farmer",    "My neighbor",  "A student",     "The committee", "Our teacher",   "The old sailor",
    "A young doctor", "The engineer", "His sister",    "The mayor",     "A tourist",     "The chef",
    "Her cousin",    "The pilot",    "A journalist",  "The gardener",  "The lawyer",    "A musician",
    "The librarian", "My uncle",     "The captain",   "A nurse",       "The baker",     "Our landlord",
    "The professor", "A carpenter",  "The driver",    "Her friend",    "The manager",   "A painter"};
const std::vector<std::string> kVerbs = {
    "described", "noticed",   "painted",  "repaired",   "discussed", "ignored",   "measured",
    "admired",   "photographed", "cleaned", "sold",     "borrowed",  "studied",   "mentioned",
    "carried",   "ordered",   "inspected", "found",     "packed",    "delivered", "remembered",
    "questioned", "explained", "designed", "replaced"};
const std::vector<std::string> kObjects = {
    "the wooden table",   "a broken clock",     "the garden fence",  "an old map",        "the red bicycle",
    "a heavy suitcase",   "the blue curtains",  "a small boat",      "the kitchen window", "a new laptop",
    "the stone bridge",   "a paper lantern",    "the leather jacket", "a glass bottle",    "the family car",
    "a tall ladder",      "the morning newspaper", "a silver spoon", "the village church", "a wool blanket",
    "the train schedule", "a cracked mirror",   "the office printer", "a green umbrella",  "the museum ticket",
    "a copper kettle",    "the school bus",     "a plastic chair",   "the hotel key",     "a fishing net"};
const std::vector<std::string> kPlaces = {
    "near the station", "after lunch",      "in the rain",     "before the meeting", "at the market",
    "during the holiday", "on Tuesday",     "last winter",     "by the river",       "in the morning",
    "after the storm",  "at the festival",  "near the harbor", "on the weekend",     "in the evening",
    "before sunrise",   "at the library",   "during the concert", "beside the lake",  "in the afternoon",
    "after dinner",     "at the airport",   "on the hill",     "in the spring",      "near the bakery"};

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[uniform_below(rng, v.size())];
}

}  // namespace

std::vector<Sentence> make_planted_corpus(const PlantedCorpusSpec& spec, std::uint64_t seed) {
  std::size_t planted = 0;
  for (const auto& ins : spec.insertions) planted += ins.count;
  if (planted > spec.n_sentences) throw ConfigError("n_sentences", "fewer sentences than planted insertions");

  Rng rng(seed);
  std::unordered_set<std::string> seen;
  auto fresh = [&](const std::string& object) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      std::string s = pick(rng, kSubjects) + " " + pick(rng, kVerbs) + " " + object + " " + pick(rng, kPlaces) + ".";
      if (seen.insert(s).second) return s;
    }
    throw ConfigError("n_sentences", "cannot generate enough distinct sentences");
  };

  std::vector<std::string> texts;
  texts.reserve(spec.n_sentences);
  for (const auto& ins : spec.insertions) {
    for (std::size_t i = 0; i < ins.count; ++i) texts.push_back(fresh(pick(rng, ins.phrases)));
  }
  while (texts.size() < spec.n_sentences) texts.push_back(fresh(pick(rng, kObjects)));
  shuffle(rng, texts);

  std::vector<Sentence> out;
  out.reserve(texts.size());
  for (auto& t : texts) out.push_back({out.size(), std::move(t), "planted"});
  return out;
}

}  // namespace feateval

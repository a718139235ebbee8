#include "feateval/replay_provider.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "feateval/error.hpp"
#include "feateval/protocol.hpp"

namespace feateval {

using nlohmann::json;

ReplayProvider ReplayProvider::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read dump " + path.string());
  return read(in, path.filename().string());
}

ReplayProvider ReplayProvider::read(std::istream& in, std::string source_name) {
  ReplayProvider p;
  p.source_ = std::move(source_name);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kIoError, p.source_ + ":" + std::to_string(lineno) + ": " + e.what());
    }
    // Keys are normalized so that "planted/0/sae_latent/1" and ".../sae/1" agree.
    const auto key = FeatureHandle::parse(rec.at("feature").get<std::string>()).key();
    const auto type = rec.value("type", "trace");
    if (type == "trace") {
      auto trace = protocol::trace_from_json(rec);
      auto& fr = p.features_[key];
      if (rec.contains("text")) {
        auto text = rec["text"].get<std::string>();
        fr.id_of_text[text] = trace.sentence_id;
        fr.text_of[trace.sentence_id] = std::move(text);
      }
      fr.by_id[trace.sentence_id] = std::move(trace);
    } else if (type == "logit_weights") {
      LogitWeightVector v{rec.at("vocab").get<std::vector<std::string>>(), rec.at("weights").get<std::vector<double>>()};
      if (v.vocab.size() != v.weights.size()) {
        throw Error(ErrorCode::kIoError, p.source_ + ":" + std::to_string(lineno) + ": vocab/weights length mismatch");
      }
      p.logits_[key] = std::move(v);
    } else if (type == "feature") {
      p.features_[key].max_observed = rec.at("max_observed_activation").get<double>();
    } else {
      throw Error(ErrorCode::kIoError, p.source_ + ":" + std::to_string(lineno) + ": unknown record type " + type);
    }
  }
  return p;
}

const ReplayProvider::FeatureRecords& ReplayProvider::find(const FeatureHandle& feature) const {
  auto it = features_.find(feature.key());
  if (it == features_.end()) throw Error(ErrorCode::kFeatureNotFound, feature.key());
  return it->second;
}

std::vector<ActivationTrace> ReplayProvider::activations(const FeatureHandle& feature,
                                                         std::span<const Sentence> texts) {
  const auto& fr = find(feature);
  std::vector<ActivationTrace> out;
  out.reserve(texts.size());
  for (const auto& s : texts) {
    auto it = fr.by_id.find(s.id);
    auto recorded_text = fr.text_of.find(s.id);
    const bool text_matches = recorded_text == fr.text_of.end() || recorded_text->second == s.text;
    if (it == fr.by_id.end() || !text_matches) {
      auto by_text = fr.id_of_text.find(s.text);
      if (by_text == fr.id_of_text.end()) {
        throw Error(ErrorCode::kRecordMissing, feature.key() + " has no recorded trace for sentence " + std::to_string(s.id));
      }
      it = fr.by_id.find(by_text->second);
    }
    auto trace = it->second;
    trace.sentence_id = s.id;
    out.push_back(std::move(trace));
  }
  return out;
}

std::vector<std::string> ReplayProvider::generate_steered(std::span<const Sentence>, const SteeringSpec&, std::uint64_t) {
  throw Error(ErrorCode::kSteeringUnsupported, "recorded dumps cannot generate text");
}

LogitWeightVector ReplayProvider::logit_weights(const FeatureHandle& feature) {
  auto it = logits_.find(feature.key());
  if (it == logits_.end()) throw Error(ErrorCode::kCapabilityMissing, "no recorded logit weights for " + feature.key());
  return it->second;
}

std::optional<double> ReplayProvider::max_observed_activation(const FeatureHandle& feature) const {
  return find(feature).max_observed;
}

std::vector<std::string> ReplayProvider::feature_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : features_) out.push_back(k);
  return out;
}

std::string ReplayProvider::record_line(const std::string& feature_key, const ActivationTrace& trace,
                                        const std::string& text) {
  json rec = protocol::trace_to_json(trace);
  rec["type"] = "trace";
  rec["feature"] = feature_key;
  if (!text.empty()) rec["text"] = text;
  return rec.dump();
}

}  // namespace feateval

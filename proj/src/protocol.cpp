#include "feateval/protocol.hpp"

#include "feateval/assets.hpp"
#include <algorithm>
#include <map>
#include <mutex>

#include "feateval/error.hpp"

namespace feateval::protocol {
namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kProtocolError, (path.empty() ? std::string("$") : path) + ": " + what);
}

const json& load_schema(std::string_view name) {
  static std::mutex mu;
  static std::map<std::string, json, std::less<>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(name);
  if (it == cache.end()) {
    auto text = asset("schemas/v1/" + std::string(name) + ".json");
    it = cache.emplace(std::string(name), json::parse(text)).first;
  }
  return it->second;
}

bool type_matches(const std::string& type, const json& v) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  return false;
}

void check(const json& schema, const json& v, const std::string& path) {
  if (schema.contains("$ref")) {
    check(load_schema(schema["$ref"].get<std::string>()), v, path);
    return;
  }
  if (schema.contains("type")) {
    const auto& t = schema["type"];
    bool ok = false;
    if (t.is_array()) {
      for (const auto& one : t) ok = ok || type_matches(one.get<std::string>(), v);
    } else {
      ok = type_matches(t.get<std::string>(), v);
    }
    if (!ok) fail(path, "expected " + t.dump());
  }
  if (schema.contains("const") && v != schema["const"]) fail(path, "expected " + schema["const"].dump());
  if (schema.contains("enum")) {
    const auto& e = schema["enum"];
    if (std::find(e.begin(), e.end(), v) == e.end()) fail(path, "value " + v.dump() + " not in " + e.dump());
  }
  if (schema.contains("minimum") && v.is_number() && v.get<double>() < schema["minimum"].get<double>()) {
    fail(path, "below minimum " + schema["minimum"].dump());
  }
  if (schema.contains("minLength") && v.is_string() && v.get<std::string>().size() < schema["minLength"].get<std::size_t>()) {
    fail(path, "string too short");
  }
  if (v.is_object()) {
    for (const auto& r : schema.value("required", json::array())) {
      if (!v.contains(r.get<std::string>())) fail(path, "missing required field '" + r.get<std::string>() + "'");
    }
    const json props = schema.value("properties", json::object());
    const bool closed = schema.contains("additionalProperties") && schema["additionalProperties"] == false;
    for (const auto& [k, child] : v.items()) {
      if (props.contains(k)) {
        check(props[k], child, path + "." + k);
      } else if (closed) {
        fail(path, "unexpected field '" + k + "'");
      }
    }
  }
  if (v.is_array()) {
    if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>()) fail(path, "too few items");
    if (schema.contains("maxItems") && v.size() > schema["maxItems"].get<std::size_t>()) fail(path, "too many items");
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < v.size(); ++i) check(schema["items"], v[i], path + "[" + std::to_string(i) + "]");
    }
  }
}

std::string error_wire_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFeatureNotFound: return "feature_not_found";
    case ErrorCode::kCapabilityMissing: return "capability_missing";
    case ErrorCode::kSteeringUnsupported: return "steering_unsupported";
    case ErrorCode::kProviderUnavailable: return "unavailable";
    default: return "bad_request";
  }
}

}  // namespace

std::string_view schema_name(Message m) {
  switch (m) {
    case Message::kActivationsRequest: return "activations_request";
    case Message::kActivationsResponse: return "activations_response";
    case Message::kGenerateRequest: return "generate_request";
    case Message::kGenerateResponse: return "generate_response";
    case Message::kLogitWeightsRequest: return "logit_weights_request";
    case Message::kLogitWeightsResponse: return "logit_weights_response";
    case Message::kHealthResponse: return "health_response";
    case Message::kErrorResponse: return "error_response";
  }
  return "";
}

void validate(Message m, const json& message) { check(load_schema(schema_name(m)), message, ""); }

json feature_to_json(const FeatureHandle& f) {
  json j = {{"model_id", f.model_id}, {"layer", f.layer}, {"kind", feature_kind_name(f.kind)}, {"index", f.index}};
  if (f.max_observed_activation) j["max_observed_activation"] = *f.max_observed_activation;
  return j;
}

FeatureHandle feature_from_json(const json& j) {
  FeatureHandle f;
  f.model_id = j.at("model_id").get<std::string>();
  f.layer = j.at("layer").get<std::uint32_t>();
  f.kind = parse_feature_kind(j.at("kind").get<std::string>());
  f.index = j.at("index").get<std::uint64_t>();
  if (j.contains("max_observed_activation")) f.max_observed_activation = j["max_observed_activation"].get<double>();
  return f;
}

json trace_to_json(const ActivationTrace& t) {
  json j = {{"sentence_id", t.sentence_id}, {"tokens", t.tokens}, {"activations", t.activations}};
  if (!t.offsets.empty()) {
    json offs = json::array();
    for (const auto& s : t.offsets) offs.push_back({s.begin, s.end});
    j["offsets"] = offs;
  }
  return j;
}

ActivationTrace trace_from_json(const json& j) {
  std::vector<text::Span> offsets;
  if (j.contains("offsets")) {
    for (const auto& o : j["offsets"]) offsets.push_back({o.at(0).get<std::size_t>(), o.at(1).get<std::size_t>()});
  }
  return ActivationTrace::make(j.at("sentence_id").get<std::uint64_t>(), j.at("tokens").get<std::vector<std::string>>(),
                               j.at("activations").get<std::vector<double>>(), std::move(offsets));
}

json activations_request(const FeatureHandle& feature, std::span<const Sentence> texts) {
  json items = json::array();
  for (const auto& s : texts) items.push_back({{"id", s.id}, {"text", s.text}});
  return {{"version", kVersion}, {"feature", feature_to_json(feature)}, {"texts", items}};
}

json activations_response(std::span<const ActivationTrace> traces) {
  json items = json::array();
  for (const auto& t : traces) items.push_back(trace_to_json(t));
  return {{"version", kVersion}, {"traces", items}};
}

std::vector<ActivationTrace> parse_activations_response(const json& j, std::size_t expected) {
  throw_if_error(j);
  validate(Message::kActivationsResponse, j);
  std::vector<ActivationTrace> out;
  for (const auto& t : j["traces"]) out.push_back(trace_from_json(t));
  if (out.size() != expected) {
    throw Error(ErrorCode::kProtocolError, "expected " + std::to_string(expected) + " traces, got " + std::to_string(out.size()));
  }
  return out;
}

json generate_request(std::span<const Sentence> prompts, const SteeringSpec& spec, std::uint64_t seed) {
  json texts = json::array();
  for (const auto& p : prompts) texts.push_back(p.text);
  json steering = {{"feature", feature_to_json(spec.feature)},
                   {"factor", spec.factor},
                   {"mode", spec.mode() == SteeringMode::kPin ? "pin" : "multiply"},
                   {"max_new_tokens", spec.max_new_tokens}};
  if (spec.mode() == SteeringMode::kPin) steering["value"] = spec.pinned_value();
  return {{"version", kVersion}, {"prompts", texts}, {"steering", steering}, {"seed", seed}};
}

json generate_response(std::span<const std::string> continuations) {
  return {{"version", kVersion}, {"continuations", json(std::vector<std::string>(continuations.begin(), continuations.end()))}};
}

std::vector<std::string> parse_generate_response(const json& j, std::size_t expected) {
  throw_if_error(j);
  validate(Message::kGenerateResponse, j);
  auto out = j["continuations"].get<std::vector<std::string>>();
  if (out.size() != expected) throw Error(ErrorCode::kProtocolError, "continuation count mismatch");
  return out;
}

json logit_weights_request(const FeatureHandle& feature) {
  return {{"version", kVersion}, {"feature", feature_to_json(feature)}};
}

json logit_weights_response(const LogitWeightVector& v) {
  return {{"version", kVersion}, {"vocab", v.vocab}, {"weights", v.weights}};
}

LogitWeightVector parse_logit_weights_response(const json& j) {
  throw_if_error(j);
  validate(Message::kLogitWeightsResponse, j);
  LogitWeightVector v{j["vocab"].get<std::vector<std::string>>(), j["weights"].get<std::vector<double>>()};
  if (v.vocab.size() != v.weights.size()) throw Error(ErrorCode::kProtocolError, "vocab and weights differ in length");
  return v;
}

json health_response(std::string_view model_id, const ProviderCapabilities& caps) {
  json c = json::array({"activations"});
  if (caps.steering) c.push_back("generate");
  if (caps.logit_weights) c.push_back("logit_weights");
  return {{"version", kVersion}, {"model_id", model_id}, {"capabilities", c}};
}

json error_response(ErrorCode code, std::string_view message) {
  return {{"version", kVersion}, {"error", {{"code", error_wire_code(code)}, {"message", message}}}};
}

void throw_if_error(const json& j) {
  if (!j.is_object() || !j.contains("error")) return;
  validate(Message::kErrorResponse, j);
  const auto code = j["error"]["code"].get<std::string>();
  const auto msg = j["error"]["message"].get<std::string>();
  if (code == "feature_not_found") throw Error(ErrorCode::kFeatureNotFound, msg);
  if (code == "capability_missing") throw Error(ErrorCode::kCapabilityMissing, msg);
  if (code == "steering_unsupported") throw Error(ErrorCode::kSteeringUnsupported, msg);
  if (code == "unavailable") throw Error(ErrorCode::kProviderUnavailable, msg);
  throw Error(ErrorCode::kProtocolError, msg);
}

json dispatch(Provider& provider, std::string_view endpoint, const json& request) {
  try {
    if (endpoint == "activations") {
      validate(Message::kActivationsRequest, request);
      std::vector<Sentence> texts;
      for (const auto& t : request["texts"]) texts.push_back({t["id"].get<std::uint64_t>(), t["text"].get<std::string>(), {}});
      auto traces = provider.activations(feature_from_json(request["feature"]), texts);
      return activations_response(traces);
    }
    if (endpoint == "generate") {
      validate(Message::kGenerateRequest, request);
      std::vector<Sentence> prompts;
      for (const auto& p : request["prompts"]) prompts.push_back({prompts.size(), p.get<std::string>(), {}});
      const auto& st = request["steering"];
      SteeringSpec spec{feature_from_json(st["feature"]), st["factor"].get<double>(), st["max_new_tokens"].get<std::size_t>()};
      auto out = provider.generate_steered(prompts, spec, request["seed"].get<std::uint64_t>());
      return generate_response(out);
    }
    if (endpoint == "logit_weights") {
      validate(Message::kLogitWeightsRequest, request);
      return logit_weights_response(provider.logit_weights(feature_from_json(request["feature"])));
    }
    return error_response(ErrorCode::kProtocolError, "unknown endpoint " + std::string(endpoint));
  } catch (const Error& e) {
    return error_response(e.code(), e.detail());
  } catch (const std::exception& e) {
    return error_response(ErrorCode::kProtocolError, e.what());
  }
}

}  // namespace feateval::protocol

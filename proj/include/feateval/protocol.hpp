#pragma once

// Wire protocol between the engine and a model-serving sidecar. Messages are
// JSON objects carrying a mandatory "version"; the schema files under
// schemas/v1 are compiled in and checked on both sides of the client.

#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>

#include "feateval/error.hpp"
#include "feateval/provider.hpp"

namespace feateval::protocol {

using nlohmann::json;

inline constexpr std::string_view kVersion = "1";

enum class Message {
  kActivationsRequest,
  kActivationsResponse,
  kGenerateRequest,
  kGenerateResponse,
  kLogitWeightsRequest,
  kLogitWeightsResponse,
  kHealthResponse,
  kErrorResponse,
};

std::string_view schema_name(Message m);

/// Validates against the compiled-in schema. Throws ProtocolError naming the
/// offending JSON path. Supports the subset of JSON Schema the files use:
/// type, const, enum, properties, required, additionalProperties=false,
/// items, minItems, maxItems, minimum, minLength and "$ref" to a sibling file.
void validate(Message m, const json& message);

json feature_to_json(const FeatureHandle& f);
FeatureHandle feature_from_json(const json& j);

json trace_to_json(const ActivationTrace& t);
ActivationTrace trace_from_json(const json& j);

json activations_request(const FeatureHandle& feature, std::span<const Sentence> texts);
json activations_response(std::span<const ActivationTrace> traces);
std::vector<ActivationTrace> parse_activations_response(const json& j, std::size_t expected);

json generate_request(std::span<const Sentence> prompts, const SteeringSpec& spec, std::uint64_t seed);
json generate_response(std::span<const std::string> continuations);
std::vector<std::string> parse_generate_response(const json& j, std::size_t expected);

json logit_weights_request(const FeatureHandle& feature);
json logit_weights_response(const LogitWeightVector& v);
LogitWeightVector parse_logit_weights_response(const json& j);

json health_response(std::string_view model_id, const ProviderCapabilities& caps);

json error_response(ErrorCode code, std::string_view message);
/// Throws the engine error matching an error envelope; no-op otherwise.
void throw_if_error(const json& j);

/// Server-side dispatch for "activations", "generate" and "logit_weights":
/// validates the request, calls the provider, returns the response or an
/// error envelope. Used by loopback test servers.
json dispatch(Provider& provider, std::string_view endpoint, const json& request);

}  // namespace feateval::protocol

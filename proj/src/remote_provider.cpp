#include "feateval/remote_provider.hpp"

#include <httplib.h>

#include <algorithm>
#include <thread>

#include "feateval/error.hpp"

namespace feateval {

using protocol::json;

RemoteProvider::RemoteProvider(RemoteProviderOptions options) : options_(std::move(options)) {}

json RemoteProvider::call(const std::string& path, const json* body) const {
  std::string last_error;
  for (int attempt = 0; attempt <= options_.transport_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.retry_backoff * attempt);
    // httplib clients are not shared across threads; one per call is cheap on loopback.
    httplib::Client client(options_.endpoint);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout).count();
    client.set_connection_timeout(std::max<long>(1, static_cast<long>(secs)), 0);
    client.set_read_timeout(static_cast<time_t>(secs), 0);
    auto res = body ? client.Post(path, body->dump(), "application/json") : client.Get(path);
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500 && res->status != 503) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kProtocolError, path + ": response is not JSON: " + e.what());
    }
  }
  throw Error(ErrorCode::kProviderUnavailable, options_.endpoint + path + ": " + last_error);
}

json RemoteProvider::health() const {
  std::lock_guard lock(health_mu_);
  if (!health_) {
    auto h = call("/v1/health", nullptr);
    protocol::throw_if_error(h);
    protocol::validate(protocol::Message::kHealthResponse, h);
    health_ = std::move(h);
  }
  return *health_;
}

std::string RemoteProvider::id() const {
  try {
    return "remote:" + health()["model_id"].get<std::string>();
  } catch (const Error&) {
    return "remote:" + options_.endpoint;
  }
}

ProviderCapabilities RemoteProvider::capabilities() const {
  auto caps = health()["capabilities"];
  auto has = [&](const char* c) { return std::find(caps.begin(), caps.end(), c) != caps.end(); };
  return {has("generate"), has("logit_weights")};
}

std::vector<ActivationTrace> RemoteProvider::activations(const FeatureHandle& feature,
                                                         std::span<const Sentence> texts) {
  if (texts.empty()) return {};
  auto req = protocol::activations_request(feature, texts);
  protocol::validate(protocol::Message::kActivationsRequest, req);
  auto traces = protocol::parse_activations_response(call("/v1/activations", &req), texts.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].sentence_id != texts[i].id) throw Error(ErrorCode::kProtocolError, "trace order does not match request");
  }
  return traces;
}

std::vector<std::string> RemoteProvider::generate_steered(std::span<const Sentence> prompts, const SteeringSpec& spec,
                                                          std::uint64_t seed) {
  spec.validate();
  auto req = protocol::generate_request(prompts, spec, seed);
  protocol::validate(protocol::Message::kGenerateRequest, req);
  return protocol::parse_generate_response(call("/v1/generate", &req), prompts.size());
}

LogitWeightVector RemoteProvider::logit_weights(const FeatureHandle& feature) {
  auto req = protocol::logit_weights_request(feature);
  protocol::validate(protocol::Message::kLogitWeightsRequest, req);
  return protocol::parse_logit_weights_response(call("/v1/logit_weights", &req));
}

}  // namespace feateval

#pragma once

#include <chrono>
#include <mutex>
#include <optional>
#include <string>

#include "feateval/protocol.hpp"
#include "feateval/provider.hpp"

namespace feateval {

struct RemoteProviderOptions {
  std::string endpoint = "http://127.0.0.1:8765";  // scheme://host:port
  std::chrono::milliseconds timeout{60000};
  int transport_retries = 2;  // extra attempts after a transport failure
  std::chrono::milliseconds retry_backoff{200};
};

/// Client for the sidecar protocol over HTTP on a local socket:
///   GET  /v1/health
///   POST /v1/activations, /v1/generate, /v1/logit_weights
/// Requests and responses are validated against the shared schemas.
class RemoteProvider : public Provider {
 public:
  explicit RemoteProvider(RemoteProviderOptions options);

  std::string id() const override;
  ProviderCapabilities capabilities() const override;

  std::vector<ActivationTrace> activations(const FeatureHandle& feature, std::span<const Sentence> texts) override;
  std::vector<std::string> generate_steered(std::span<const Sentence> prompts, const SteeringSpec& spec,
                                            std::uint64_t seed) override;
  LogitWeightVector logit_weights(const FeatureHandle& feature) override;

  /// Fetches /v1/health; throws ProviderUnavailable when unreachable.
  protocol::json health() const;

 private:
  protocol::json call(const std::string& path, const protocol::json* body) const;

  RemoteProviderOptions options_;
  mutable std::mutex health_mu_;
  mutable std::optional<protocol::json> health_;
};

}  // namespace feateval

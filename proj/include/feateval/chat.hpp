#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace feateval {

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::optional<std::uint64_t> seed;
  std::optional<double> temperature;
};

struct ChatReply {
  std::string content;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;
};

/// A chat-completions style language model used as judge or explainer.
/// Implementations must be safe to call concurrently. Transport failures
/// throw Error.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string model_id() const = 0;
  virtual ChatReply complete(const ChatRequest& request) = 0;
};

struct OpenAiChatOptions {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o-mini-2024-07-18";
  std::string api_key_env = "OPENAI_API_KEY";
  std::optional<double> temperature;  // service default when unset
  std::chrono::milliseconds timeout{120000};
  int transport_retries = 2;
};

/// Speaks the widely used /chat/completions wire schema.
class OpenAiChatBackend : public ChatBackend {
 public:
  explicit OpenAiChatBackend(OpenAiChatOptions options);
  std::string model_id() const override { return options_.model; }
  ChatReply complete(const ChatRequest& request) override;
  const OpenAiChatOptions& options() const { return options_; }

 private:
  OpenAiChatOptions options_;
  std::string api_key_;
};

}  // namespace feateval

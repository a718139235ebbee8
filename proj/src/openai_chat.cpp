#include <httplib.h>

#include <cstdlib>
#include <nlohmann/json.hpp>
#include <thread>

#include "feateval/chat.hpp"
#include "feateval/error.hpp"

namespace feateval {

using nlohmann::json;

namespace {

// "https://host:port/prefix" -> ("https://host:port", "/prefix")
std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, ""};
  std::string path = url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_start), path};
}

}  // namespace

OpenAiChatBackend::OpenAiChatBackend(OpenAiChatOptions options) : options_(std::move(options)) {
  if (!options_.api_key_env.empty()) {
    if (const char* key = std::getenv(options_.api_key_env.c_str())) api_key_ = key;
  }
}

ChatReply OpenAiChatBackend::complete(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  json body = {{"model", options_.model}, {"messages", messages}};
  if (auto t = request.temperature ? request.temperature : options_.temperature) body["temperature"] = *t;
  if (request.seed) body["seed"] = *request.seed;

  auto [host, prefix] = split_url(options_.base_url);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string last_error;
  for (int attempt = 0; attempt <= options_.transport_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(500) * attempt);
    httplib::Client client(host);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout).count();
    client.set_read_timeout(static_cast<time_t>(secs), 0);
    client.set_connection_timeout(10, 0);
    auto res = client.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::kJudgeFailure, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    try {
      auto j = json::parse(res->body);
      ChatReply reply;
      const auto& content = j.at("choices").at(0).at("message").at("content");
      reply.content = content.is_string() ? content.get<std::string>() : std::string();
      if (j.contains("usage")) {
        reply.prompt_tokens = j["usage"].value("prompt_tokens", std::uint64_t{0});
        reply.completion_tokens = j["usage"].value("completion_tokens", std::uint64_t{0});
      }
      return reply;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kJudgeFailure, std::string("malformed completion response: ") + e.what());
    }
  }
  throw Error(ErrorCode::kJudgeFailure, "judge unreachable at " + options_.base_url + ": " + last_error);
}

}  // namespace feateval

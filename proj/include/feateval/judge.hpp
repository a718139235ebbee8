#pragma once

// Client for the evaluating model: synthetic concept-sample generation and
// three-point concept rating, with the retry rules the metrics rely on.

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "feateval/chat.hpp"

namespace feateval {

struct ConceptRating {
  std::string sample_id;
  int rating = 0;  // 0, 1 or 2
};

struct SyntheticBatch {
  std::string description;
  std::vector<std::string> samples;  // pairwise distinct after trimming
  std::size_t requests = 0;
  std::size_t failed_requests = 0;
  std::size_t duplicates_removed = 0;
};

struct RatingItem {
  std::string id;
  std::string text;
};

struct RatingResult {
  std::vector<ConceptRating> ratings;  // request order
  std::size_t dropped = 0;
  std::size_t calls = 0;
  std::size_t retry_calls = 0;
};

/// Which stage a judge call belongs to, for usage accounting.
enum class JudgePurpose { kSynthetic = 0, kRating = 1, kSteeringRating = 2, kExplain = 3 };
inline constexpr std::size_t kJudgePurposes = 4;
std::string_view judge_purpose_name(JudgePurpose purpose);

struct JudgeUsage {
  std::array<std::uint64_t, kJudgePurposes> calls{};
  std::array<std::uint64_t, kJudgePurposes> failed_calls{};
  std::array<std::uint64_t, kJudgePurposes> prompt_tokens{};
  std::array<std::uint64_t, kJudgePurposes> completion_tokens{};

  std::uint64_t total_calls() const;
  JudgeUsage& operator+=(const JudgeUsage& other);
  JudgeUsage operator-(const JudgeUsage& other) const;
  nlohmann::json to_json() const;
};

struct JudgeOptions {
  /// Concurrent requests in flight per operation.
  std::size_t max_concurrency = 4;
  /// Sent with every request when set; otherwise the service default applies.
  std::optional<double> temperature;
};

// Prompt rendering. System text is the stored template verbatim.
std::vector<ChatMessage> synthetic_generation_messages(std::string_view description);
std::vector<ChatMessage> rating_messages(std::string_view description, std::span<const RatingItem> items);

// Tolerant reply parsing. Surrounding prose is dropped down to the outermost
// bracket (or brace) expression, which is then read as JSON or as a Python
// literal. Return nullopt when nothing usable is found.
std::optional<nlohmann::ordered_json> parse_literal(std::string_view text);
std::optional<std::vector<std::string>> parse_string_list(std::string_view reply);
std::optional<std::vector<std::pair<std::string, nlohmann::json>>> parse_rating_map(std::string_view reply);

class JudgeClient {
 public:
  explicit JudgeClient(ChatBackend& backend, JudgeOptions options = {});

  /// n_requests independent generation calls, each retried once when its
  /// reply does not parse as a list. Throws JudgeFailure if every request fails.
  SyntheticBatch generate_synthetic(const std::string& description, std::size_t n_requests, std::uint64_t seed);

  /// Rates items in batches of batch_size. Ids missing or malformed in a
  /// reply are retried once in fresh batches, then dropped. Throws
  /// JudgeFailure when no rating parses at all.
  RatingResult rate(const std::string& description, std::span<const RatingItem> items, std::size_t batch_size,
                    std::uint64_t seed, JudgePurpose purpose = JudgePurpose::kRating);

  /// One raw call, accounted under `purpose`.
  ChatReply complete(const ChatRequest& request, JudgePurpose purpose);

  JudgeUsage usage() const;
  std::string model_id() const { return backend_.model_id(); }
  const JudgeOptions& options() const { return options_; }

 private:
  ChatBackend& backend_;
  JudgeOptions options_;
  mutable std::mutex mu_;
  JudgeUsage usage_;
};

/// Concept knowledge of the mock judge.
struct MockConcept {
  std::string description;
  std::vector<std::string> lexicon;    // presence means rating 2
  std::vector<std::string> near_miss;  // presence (without a lexicon hit) means rating 1
};

/// Deterministic offline judge and explainer. Recognizes requests by their
/// system message: generation replies with templated sentences embedding
/// lexicon words, rating scores by word presence, explainer replies name the
/// most highlighted word (or the registered concept that contains it).
/// Descriptions not in the registry use their own content words as lexicon.
class MockJudge : public ChatBackend {
 public:
  explicit MockJudge(std::vector<MockConcept> registry = {}, std::size_t samples_per_request = 5);

  std::string model_id() const override { return "mock-judge"; }
  ChatReply complete(const ChatRequest& request) override;

  /// Returning a string replaces the reply; throwing simulates transport failure.
  using Fault = std::function<std::optional<std::string>(const ChatRequest&, std::uint64_t call_index)>;
  void set_fault(Fault fault);

  MockConcept concept_for(std::string_view description) const;
  /// 2 / 1 / 0 rating of one text under the concept.
  static int rate_text(const MockConcept& concept_entry, std::string_view text);
  std::uint64_t calls() const { return calls_; }

 private:
  std::string generate(const ChatRequest& request) const;
  std::string rate(const ChatRequest& request) const;
  std::string explain(const ChatRequest& request) const;

  std::vector<MockConcept> registry_;
  std::size_t samples_per_request_;
  Fault fault_;
  std::atomic<std::uint64_t> calls_{0};
};

}  // namespace feateval

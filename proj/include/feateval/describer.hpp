#pragma once

// Feature descriptions: explainer prompting over top-activating samples,
// plus TF-IDF and unembedding baselines.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "feateval/chat.hpp"
#include "feateval/corpus.hpp"
#include "feateval/judge.hpp"
#include "feateval/provider.hpp"

namespace feateval {

inline constexpr std::string_view kNoConceptFound = "NO CONCEPT FOUND";

enum class DescriptionMethod { kMaxActStar, kTfidf, kUnembedding, kExternal };
std::string_view description_method_name(DescriptionMethod method);
DescriptionMethod parse_description_method(std::string_view name);

struct Description {
  FeatureHandle feature;
  std::string text;
  DescriptionMethod method = DescriptionMethod::kExternal;
  nlohmann::json provenance = nlohmann::json::object();

  nlohmann::json to_json() const;
  static Description from_json(const nlohmann::json& j);
};

enum class PromptMode { kDelimiter, kNumeric };

struct PromptRenderSpec {
  PromptMode mode = PromptMode::kDelimiter;
  std::size_t n_shots = 2;
  std::size_t n_samples = 15;
};

struct RenderedPrompt {
  std::vector<ChatMessage> messages;  // system, user
  /// System and user text joined by a newline; what golden fixtures store.
  std::string full_text() const;
  std::string hash() const;  // hex fnv1a64 of full_text
};

/// Top k_pool traces by aggregate, then a seeded uniform subsample of n kept
/// in rank order. Throws InsufficientCorpus if the corpus has fewer than n
/// sentences, ConfigError if n > k_pool.
std::vector<ActivationTrace> collect_samples(Provider& provider, const FeatureHandle& feature, const Corpus& corpus,
                                             std::size_t k_pool, std::size_t n, std::uint64_t seed);

/// Mean token activation per whitespace-delimited word of `text`; a token
/// counts toward every word its byte span overlaps. Tokens without offsets
/// are located by a left-to-right search.
std::vector<double> word_activations(std::string_view text, const ActivationTrace& trace);

/// Renders the explainer prompt. Word activations are scaled linearly so the
/// largest word activation across all samples maps to 10. Delimiter mode
/// marks words with scaled intensity in (0, 4) as {w} and >= 4 as {{w}};
/// numeric mode lists the top words with rounded values after each sentence.
/// Throws ConfigError when n_shots exceeds the example bank.
RenderedPrompt render_prompt(std::span<const std::string> texts, std::span<const ActivationTrace> traces,
                             const PromptRenderSpec& spec);

/// Text after "Concept:" on its line, trimmed; the sentinel when the reply
/// says no concept was found; empty when the marker is missing.
std::string extract_concept(std::string_view reply);

/// Calls the explainer, retrying once when the reply has no "Concept:"
/// marker. Throws DescribeFailure after the retry.
Description explain(const FeatureHandle& feature, const RenderedPrompt& prompt, JudgeClient& explainer,
                    std::uint64_t seed);

struct TermScore {
  std::string term;
  double score = 0.0;
};

/// tf (in the foreground, taken as one document) times ln(N / df) over the
/// corpus; terms with a zero score are dropped. Descending by score, ties
/// by first occurrence in the foreground.
std::vector<TermScore> tfidf_terms(std::span<const std::string> foreground, const Corpus& corpus);

/// Top 10 TF-IDF terms of the n_samples most activating sentences,
/// space-joined. Throws DescribeFailure when nothing scores.
Description tfidf_describe(Provider& provider, const FeatureHandle& feature, const Corpus& corpus,
                           std::size_t n_samples = 15, std::size_t top_terms = 10);

/// The top_k vocabulary entries of the logit weight vector, comma-joined,
/// ties to the lower vocabulary index. Propagates CapabilityMissing.
Description unembedding_describe(Provider& provider, const FeatureHandle& feature, std::size_t top_k = 10);

}  // namespace feateval

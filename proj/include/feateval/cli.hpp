#pragma once

// Operator entry point. The executable in tools/ only forwards to run_cli so
// the whole command surface is testable in-process.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "feateval/corpus.hpp"
#include "feateval/describer.hpp"
#include "feateval/judge.hpp"
#include "feateval/pipeline.hpp"

namespace feateval::cli {

enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kConfigInvalid = 2,
  kPartialFailure = 3,
  kDependencyUnavailable = 4,
};

struct ProviderConfig {
  std::string kind = "synthetic";  // synthetic | replay | remote
  std::filesystem::path model;     // synthetic: planted model JSON
  std::filesystem::path dump;      // replay: JSONL dump
  std::string endpoint;            // remote: http://host:port
};

struct ChatConfig {
  std::string kind = "mock";  // mock | openai
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o-mini-2024-07-18";
  std::string api_key_env = "OPENAI_API_KEY";
  std::optional<double> temperature;
  std::size_t max_concurrency = 4;
  std::vector<MockConcept> registry;  // mock only
  std::size_t samples_per_request = 5;
};

struct DescribeConfig {
  std::string method = "maxact_star";  // maxact_star | tfidf | unembedding
  PromptRenderSpec prompt;
  std::size_t k_pool = 1000;
  std::size_t tfidf_samples = 15;
  std::size_t top_k = 10;
};

struct RunConfig {
  std::vector<std::filesystem::path> corpus_inputs;
  std::filesystem::path corpus_dir;  // default <out>/corpus
  double length_low_percentile = 5.0;
  double length_high_percentile = 95.0;
  ProviderConfig provider;
  ChatConfig judge;
  ChatConfig explainer;
  DescribeConfig describe;
  EvaluationConfig evaluation;
  std::vector<std::string> features;  // keys, ranges "m/l/k/lo-hi", or "all"
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::filesystem::path out = "run";

  /// Relative paths are resolved against base_dir. Throws ConfigError.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  /// Everything that influences artifacts (not workers or output location).
  nlohmann::json effective_json() const;
  /// Identifies the run directory: effective_json without the describe and
  /// explainer settings.
  std::string hash() const;
};

/// Expands "model/layer/kind/lo-hi" ranges; other keys pass through.
std::vector<std::string> expand_feature_keys(const std::vector<std::string>& keys);

/// Runs one command line (argv[0] is the program name). Output and
/// diagnostics go to the given streams.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace feateval::cli

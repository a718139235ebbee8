#include <unordered_map>

#include "feateval/error.hpp"
#include "feateval/random.hpp"

namespace feateval {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kCorpusEmpty: return "CorpusEmpty";
    case ErrorCode::kInsufficientCorpus: return "InsufficientCorpus";
    case ErrorCode::kFeatureNotFound: return "FeatureNotFound";
    case ErrorCode::kProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::kSteeringUnsupported: return "SteeringUnsupported";
    case ErrorCode::kCapabilityMissing: return "CapabilityMissing";
    case ErrorCode::kRecordMissing: return "RecordMissing";
    case ErrorCode::kProtocolError: return "ProtocolError";
    case ErrorCode::kJudgeFailure: return "JudgeFailure";
    case ErrorCode::kEmptySampleSet: return "EmptySampleSet";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kClarityUndefined: return "ClarityUndefined";
    case ErrorCode::kConceptStarved: return "ConceptStarved";
    case ErrorCode::kDescribeFailure: return "DescribeFailure";
    case ErrorCode::kEmptyRun: return "EmptyRun";
    case ErrorCode::kCorrelationUndefined: return "CorrelationUndefined";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) noexcept {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  // Reject the low sliver so that r % n is exactly uniform.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    std::uint64_t r = rng();
    if (r >= threshold) return r % n;
  }
}

std::vector<std::uint64_t> sample_without_replacement(Rng& rng, std::uint64_t n, std::uint64_t k) {
  // Sparse Fisher-Yates: only displaced slots are materialized.
  std::vector<std::uint64_t> out;
  out.reserve(k);
  std::unordered_map<std::uint64_t, std::uint64_t> swapped;
  auto slot = [&](std::uint64_t i) {
    auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  for (std::uint64_t i = 0; i < k; ++i) {
    std::uint64_t j = i + uniform_below(rng, n - i);
    std::uint64_t vj = slot(j);
    std::uint64_t vi = slot(i);
    out.push_back(vj);
    swapped[j] = vi;
  }
  return out;
}

}  // namespace feateval

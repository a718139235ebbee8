#pragma once

// Data-parallel scans over the corpus. Each kernel has an OpenMP version
// (namespace feateval) and a serial reference in feateval::serial kept for
// tests and benchmarks; both must return identical results.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "feateval/corpus.hpp"
#include "feateval/provider.hpp"

namespace feateval {

inline constexpr std::size_t kDefaultScanBatch = 256;

/// Per-sentence summaries of `feature` over the whole corpus, indexed by id.
std::vector<TraceAggregate> scan_aggregates(Provider& provider, const FeatureHandle& feature, const Corpus& corpus,
                                            std::size_t batch_size = kDefaultScanBatch);

/// The k traces with the largest aggregate, descending; ties go to the lower
/// sentence id. Streams the corpus in batches, keeping O(k) traces per thread.
std::vector<ActivationTrace> scan_top_activating(Provider& provider, const FeatureHandle& feature,
                                                 const Corpus& corpus, std::size_t k,
                                                 std::size_t batch_size = kDefaultScanBatch);

/// Indices of the k largest scores, descending; ties go to the lower index.
std::vector<std::uint64_t> top_k_indices(std::span<const double> scores, std::size_t k);

/// Number of corpus sentences containing each term (terms are lowercase, as
/// produced by text::terms).
std::vector<std::uint64_t> document_frequency(const Corpus& corpus, std::span<const std::string> terms);

namespace serial {

std::vector<TraceAggregate> scan_aggregates(Provider& provider, const FeatureHandle& feature, const Corpus& corpus,
                                            std::size_t batch_size = kDefaultScanBatch);
/// Sort-all-then-take-k.
std::vector<ActivationTrace> scan_top_activating(Provider& provider, const FeatureHandle& feature,
                                                 const Corpus& corpus, std::size_t k,
                                                 std::size_t batch_size = kDefaultScanBatch);
std::vector<std::uint64_t> top_k_indices(std::span<const double> scores, std::size_t k);
std::vector<std::uint64_t> document_frequency(const Corpus& corpus, std::span<const std::string> terms);

}  // namespace serial

}  // namespace feateval

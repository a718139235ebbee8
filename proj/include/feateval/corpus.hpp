#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace feateval {

struct Sentence {
  std::uint64_t id = 0;
  std::string text;
  std::string source_tag;
};

struct CorpusStats {
  std::uint64_t n_sentences = 0;
  std::uint64_t n_tokens = 0;
  // Retained sentences have codepoint length in [length_low, length_high].
  std::uint64_t length_low = 0;
  std::uint64_t length_high = 0;
  std::uint64_t content_hash = 0;
};

struct RawDocument {
  std::string text;
  std::string source_tag;
};

class SentenceSplitter {
 public:
  virtual ~SentenceSplitter() = default;
  virtual std::vector<std::string> split(std::string_view document) const = 0;
};

/// Splits after '.', '!' or '?' (optionally followed by closing quotes or
/// brackets) when the next non-space character is uppercase, a digit, or an
/// opening quote. Blank lines always split. Known abbreviations and single
/// letter initials never end a sentence.
class RuleBasedSplitter : public SentenceSplitter {
 public:
  RuleBasedSplitter();
  explicit RuleBasedSplitter(std::vector<std::string> abbreviations);
  std::vector<std::string> split(std::string_view document) const override;

 private:
  bool is_abbreviation(std::string_view word) const;
  std::vector<std::string> abbreviations_;
};

struct PreprocessConfig {
  double low_percentile = 5.0;
  double high_percentile = 95.0;
  /// When set, replaces the percentile bounds. Used to re-filter an already
  /// built corpus with its recorded bounds.
  std::optional<std::pair<std::uint64_t, std::uint64_t>> length_bounds;
  std::shared_ptr<const SentenceSplitter> splitter;  // defaults to RuleBasedSplitter
};

struct PreprocessLog {
  std::uint64_t split = 0;
  std::uint64_t dropped_length = 0;
  std::uint64_t dropped_non_alphabetic = 0;
  std::uint64_t dropped_duplicate = 0;
};

struct PreprocessResult {
  std::vector<Sentence> sentences;
  CorpusStats stats;
  PreprocessLog log;
};

/// Percentile bounds over a length multiset: the bottom low_pct percent and
/// the top (100 - high_pct) percent of positions are excluded, bounds are the
/// values at the first and last retained positions.
std::pair<std::uint64_t, std::uint64_t> length_percentile_bounds(std::vector<std::uint64_t> lengths,
                                                                 double low_pct, double high_pct);

/// Split, length-percentile filter, drop sentences without letters, dedup.
/// Throws CorpusEmpty when nothing survives.
PreprocessResult preprocess(std::span<const RawDocument> documents, const PreprocessConfig& config = {});

std::uint64_t content_hash(std::span<const Sentence> sentences);

/// Read-only sentence store. Copies share the underlying storage; concurrent
/// readers are safe.
class Corpus {
 public:
  static Corpus from_sentences(std::vector<Sentence> sentences, std::optional<CorpusStats> stats = {});

  /// Opens a corpus directory written by save(). Only the offset index is
  /// loaded; sentence text is read on demand.
  static Corpus open(const std::filesystem::path& dir);

  /// Writes sentences.txt, sentences.idx and corpus.json into dir.
  void save(const std::filesystem::path& dir) const;

  std::size_t size() const;
  bool empty() const { return size() == 0; }
  Sentence at(std::uint64_t id) const;
  std::vector<Sentence> gather(std::span<const std::uint64_t> ids) const;
  std::vector<Sentence> all() const;
  const CorpusStats& stats() const;
  std::uint64_t content_hash() const { return stats().content_hash; }

 private:
  struct Impl;
  explicit Corpus(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

/// n distinct sentences drawn uniformly without replacement; a deterministic
/// function of (corpus content hash, n, seed). Throws InsufficientCorpus.
std::vector<Sentence> sample_uniform(const Corpus& corpus, std::size_t n, std::uint64_t seed);
std::vector<std::uint64_t> sample_uniform_ids(const Corpus& corpus, std::size_t n, std::uint64_t seed);

/// Reads raw documents: ".jsonl" files yield one document per record from
/// the "text" field (and optional "source"); anything else is treated as
/// plain text with one document per non-empty line. The source tag defaults
/// to the file stem.
std::vector<RawDocument> read_raw_documents(const std::filesystem::path& path);

}  // namespace feateval

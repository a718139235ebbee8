#include "feateval/corpus.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <unordered_set>

#include "feateval/error.hpp"
#include "feateval/random.hpp"
#include "feateval/text.hpp"

namespace feateval {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Sentence splitting

namespace {

const std::vector<std::string>& default_abbreviations() {
  static const std::vector<std::string> kList = {
      "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "fig", "figs", "eq", "eqs",
      "no", "nos", "vol", "inc", "ltd", "co", "corp", "dept", "approx", "cf", "al", "u.s", "u.k", "jan", "feb",
      "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "gen", "col", "lt", "sgt", "rev",
      "ph.d", "p", "pp", "ref", "refs", "sec", "ch", "art"};
  return kList;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

// Length in bytes of a closing quote/bracket at s[i], 0 if none.
std::size_t closing_mark(std::string_view s, std::size_t i) {
  char c = s[i];
  if (c == '"' || c == '\'' || c == ')' || c == ']') return 1;
  auto rest = s.substr(i);
  if (starts_with(rest, "\xE2\x80\x9D") || starts_with(rest, "\xE2\x80\x99")) return 3;
  return 0;
}

bool opens_sentence(std::string_view s, std::size_t i) {
  auto c = static_cast<unsigned char>(s[i]);
  if (std::isupper(c) || std::isdigit(c)) return true;
  if (c == '"' || c == '\'' || c == '(' || c == '[') return true;
  auto rest = s.substr(i);
  if (starts_with(rest, "\xE2\x80\x9C") || starts_with(rest, "\xE2\x80\x98")) return true;
  return c >= 0xC0;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::vector<std::string_view> paragraphs(std::string_view doc) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < doc.size()) {
    if (doc[i] == '\n') {
      std::size_t j = i + 1;
      while (j < doc.size() && doc[j] != '\n' && is_space(doc[j])) ++j;
      if (j < doc.size() && doc[j] == '\n') {
        out.push_back(doc.substr(start, i - start));
        while (j < doc.size() && is_space(doc[j])) ++j;
        start = i = j;
        continue;
      }
    }
    ++i;
  }
  out.push_back(doc.substr(start));
  return out;
}

}  // namespace

RuleBasedSplitter::RuleBasedSplitter() : abbreviations_(default_abbreviations()) {}

RuleBasedSplitter::RuleBasedSplitter(std::vector<std::string> abbreviations)
    : abbreviations_(std::move(abbreviations)) {}

bool RuleBasedSplitter::is_abbreviation(std::string_view word) const {
  while (!word.empty() && !std::isalnum(static_cast<unsigned char>(word.front()))) word.remove_prefix(1);
  if (word.size() == 1 && std::isalpha(static_cast<unsigned char>(word[0]))) return true;  // initials
  auto lower = text::to_lower_ascii(word);
  return std::find(abbreviations_.begin(), abbreviations_.end(), lower) != abbreviations_.end();
}

std::vector<std::string> RuleBasedSplitter::split(std::string_view document) const {
  std::vector<std::string> out;
  auto emit = [&](std::string_view s) {
    auto collapsed = text::collapse_whitespace(s);
    if (!collapsed.empty()) out.push_back(std::move(collapsed));
  };
  for (auto para : paragraphs(document)) {
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < para.size()) {
      char c = para[i];
      if (c != '.' && c != '!' && c != '?') {
        ++i;
        continue;
      }
      std::size_t j = i + 1;
      while (j < para.size() && (para[j] == '.' || para[j] == '!' || para[j] == '?')) ++j;
      while (j < para.size()) {
        std::size_t m = closing_mark(para, j);
        if (m == 0) break;
        j += m;
      }
      std::size_t k = j;
      while (k < para.size() && is_space(para[k])) ++k;
      if (k == j || k == para.size() || !opens_sentence(para, k)) {
        i = j;
        continue;
      }
      if (c == '.' && j == i + 1) {
        std::size_t w = i;
        while (w > start && !is_space(para[w - 1])) --w;
        if (is_abbreviation(para.substr(w, i - w))) {
          i = j;
          continue;
        }
      }
      emit(para.substr(start, j - start));
      start = i = k;
    }
    emit(para.substr(start));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Preprocessing

std::pair<std::uint64_t, std::uint64_t> length_percentile_bounds(std::vector<std::uint64_t> lengths,
                                                                 double low_pct, double high_pct) {
  if (lengths.empty()) throw Error(ErrorCode::kCorpusEmpty, "no sentences to compute length percentiles");
  std::sort(lengths.begin(), lengths.end());
  const double n = static_cast<double>(lengths.size());
  auto lo = static_cast<std::size_t>(std::floor(n * low_pct / 100.0));
  auto hi_count = static_cast<std::size_t>(std::ceil(n * high_pct / 100.0));
  lo = std::min(lo, lengths.size() - 1);
  std::size_t hi = hi_count == 0 ? 0 : std::min(hi_count - 1, lengths.size() - 1);
  hi = std::max(hi, lo);
  return {lengths[lo], lengths[hi]};
}

std::uint64_t content_hash(std::span<const Sentence> sentences) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : sentences) {
    h = fnv1a64(s.text, h);
    h = fnv1a64(std::string_view("\n", 1), h);
  }
  return h;
}

PreprocessResult preprocess(std::span<const RawDocument> documents, const PreprocessConfig& config) {
  if (documents.empty()) throw Error(ErrorCode::kCorpusEmpty, "no input documents");
  static const auto kDefaultSplitter = std::make_shared<const RuleBasedSplitter>();
  const SentenceSplitter& splitter = config.splitter ? *config.splitter : *kDefaultSplitter;

  struct Candidate {
    std::string text;
    const std::string* source;
    std::uint64_t length;
  };
  std::vector<Candidate> candidates;
  for (const auto& doc : documents) {
    for (auto& s : splitter.split(doc.text)) {
      auto len = text::codepoint_length(s);
      candidates.push_back({std::move(s), &doc.source_tag, len});
    }
  }

  PreprocessResult result;
  result.log.split = candidates.size();
  if (candidates.empty()) throw Error(ErrorCode::kCorpusEmpty, "splitting produced no sentences");

  std::pair<std::uint64_t, std::uint64_t> bounds;
  if (config.length_bounds) {
    bounds = *config.length_bounds;
  } else {
    std::vector<std::uint64_t> lengths;
    lengths.reserve(candidates.size());
    for (const auto& c : candidates) lengths.push_back(c.length);
    bounds = length_percentile_bounds(std::move(lengths), config.low_percentile, config.high_percentile);
  }

  std::unordered_set<std::string_view> seen;
  for (const auto& c : candidates) {
    if (c.length < bounds.first || c.length > bounds.second) {
      ++result.log.dropped_length;
    } else if (!text::has_alphabetic(c.text)) {
      ++result.log.dropped_non_alphabetic;
    } else if (!seen.insert(c.text).second) {
      ++result.log.dropped_duplicate;
    } else {
      result.sentences.push_back({result.sentences.size(), c.text, *c.source});
    }
  }
  if (result.sentences.empty()) throw Error(ErrorCode::kCorpusEmpty, "all sentences were filtered out");

  auto& st = result.stats;
  st.n_sentences = result.sentences.size();
  for (const auto& s : result.sentences) st.n_tokens += text::tokenize(s.text).size();
  st.length_low = bounds.first;
  st.length_high = bounds.second;
  st.content_hash = content_hash(result.sentences);
  return result;
}

// ---------------------------------------------------------------------------
// Storage

namespace {

class FileHandle {
 public:
  explicit FileHandle(const fs::path& p) : fd_(::open(p.c_str(), O_RDONLY | O_CLOEXEC)) {
    if (fd_ < 0) throw Error(ErrorCode::kIoError, "cannot open " + p.string() + ": " + std::strerror(errno));
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
  ~FileHandle() {
    if (fd_ >= 0) ::close(fd_);
  }
  // pread does not move a shared file offset, so concurrent reads are safe.
  std::string read(std::uint64_t offset, std::uint64_t len) const {
    std::string buf(len, '\0');
    std::uint64_t done = 0;
    while (done < len) {
      auto r = ::pread(fd_, buf.data() + done, len - done, static_cast<off_t>(offset + done));
      if (r <= 0) throw Error(ErrorCode::kIoError, "short read from corpus file");
      done += static_cast<std::uint64_t>(r);
    }
    return buf;
  }

 private:
  int fd_;
};

struct SourceRun {
  std::string tag;
  std::uint64_t first = 0;
  std::uint64_t count = 0;
};

std::vector<SourceRun> source_runs(std::span<const Sentence> sentences) {
  std::vector<SourceRun> runs;
  for (const auto& s : sentences) {
    if (!runs.empty() && runs.back().tag == s.source_tag) {
      ++runs.back().count;
    } else {
      runs.push_back({s.source_tag, s.id, 1});
    }
  }
  return runs;
}

}  // namespace

struct Corpus::Impl {
  CorpusStats stats;
  // In-memory variant.
  std::vector<Sentence> sentences;
  // File-backed variant.
  std::unique_ptr<FileHandle> file;
  std::vector<std::uint64_t> offsets;
  std::vector<SourceRun> runs;

  std::size_t size() const { return file ? offsets.size() - 1 : sentences.size(); }

  std::string tag_of(std::uint64_t id) const {
    auto it = std::upper_bound(runs.begin(), runs.end(), id,
                               [](std::uint64_t v, const SourceRun& r) { return v < r.first; });
    if (it == runs.begin()) return {};
    --it;
    return id < it->first + it->count ? it->tag : std::string();
  }
};

Corpus Corpus::from_sentences(std::vector<Sentence> sentences, std::optional<CorpusStats> stats) {
  auto impl = std::make_shared<Impl>();
  for (std::size_t i = 0; i < sentences.size(); ++i) sentences[i].id = i;
  if (stats) {
    impl->stats = *stats;
  } else {
    impl->stats.n_sentences = sentences.size();
    std::uint64_t lo = UINT64_MAX, hi = 0;
    for (const auto& s : sentences) {
      impl->stats.n_tokens += text::tokenize(s.text).size();
      auto len = text::codepoint_length(s.text);
      lo = std::min<std::uint64_t>(lo, len);
      hi = std::max<std::uint64_t>(hi, len);
    }
    impl->stats.length_low = sentences.empty() ? 0 : lo;
    impl->stats.length_high = hi;
  }
  impl->stats.content_hash = feateval::content_hash(sentences);
  impl->sentences = std::move(sentences);
  return Corpus(std::move(impl));
}

Corpus Corpus::open(const fs::path& dir) {
  auto impl = std::make_shared<Impl>();
  std::ifstream meta_in(dir / "corpus.json");
  if (!meta_in) throw Error(ErrorCode::kIoError, "missing corpus.json in " + dir.string());
  json meta = json::parse(meta_in);
  auto& st = impl->stats;
  st.n_sentences = meta.at("n_sentences").get<std::uint64_t>();
  st.n_tokens = meta.at("n_tokens").get<std::uint64_t>();
  st.length_low = meta.at("length_bounds").at(0).get<std::uint64_t>();
  st.length_high = meta.at("length_bounds").at(1).get<std::uint64_t>();
  st.content_hash = std::stoull(meta.at("content_hash").get<std::string>(), nullptr, 16);
  for (const auto& r : meta.value("sources", json::array())) {
    impl->runs.push_back({r.at("tag").get<std::string>(), r.at("first").get<std::uint64_t>(),
                          r.at("count").get<std::uint64_t>()});
  }

  std::ifstream idx(dir / "sentences.idx", std::ios::binary);
  if (!idx) throw Error(ErrorCode::kIoError, "missing sentences.idx in " + dir.string());
  impl->offsets.resize(st.n_sentences + 1);
  for (auto& off : impl->offsets) {
    unsigned char b[8];
    if (!idx.read(reinterpret_cast<char*>(b), 8)) throw Error(ErrorCode::kIoError, "truncated sentences.idx");
    off = 0;
    for (int k = 7; k >= 0; --k) off = (off << 8) | b[k];
  }
  impl->file = std::make_unique<FileHandle>(dir / "sentences.txt");
  return Corpus(std::move(impl));
}

void Corpus::save(const fs::path& dir) const {
  fs::create_directories(dir);
  std::ofstream txt(dir / "sentences.txt", std::ios::binary);
  std::ofstream idx(dir / "sentences.idx", std::ios::binary);
  if (!txt || !idx) throw Error(ErrorCode::kIoError, "cannot write corpus into " + dir.string());
  auto put_offset = [&](std::uint64_t off) {
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(off >> (8 * k));
    idx.write(reinterpret_cast<const char*>(b), 8);
  };
  std::uint64_t offset = 0;
  auto sentences = all();
  for (const auto& s : sentences) {
    put_offset(offset);
    txt << s.text << '\n';
    offset += s.text.size() + 1;
  }
  put_offset(offset);

  const auto& st = stats();
  json sources = json::array();
  for (const auto& r : source_runs(sentences)) {
    if (!r.tag.empty()) sources.push_back({{"tag", r.tag}, {"first", r.first}, {"count", r.count}});
  }
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(st.content_hash));
  json meta = {{"format", "feateval-corpus/1"},
               {"n_sentences", st.n_sentences},
               {"n_tokens", st.n_tokens},
               {"length_bounds", {st.length_low, st.length_high}},
               {"content_hash", hash},
               {"sources", sources}};
  std::ofstream(dir / "corpus.json") << meta.dump(2) << '\n';
}

std::size_t Corpus::size() const { return impl_ ? impl_->size() : 0; }

Sentence Corpus::at(std::uint64_t id) const {
  if (id >= size()) throw Error(ErrorCode::kInsufficientCorpus, "sentence id out of range: " + std::to_string(id));
  if (!impl_->file) return impl_->sentences[id];
  auto begin = impl_->offsets[id];
  auto len = impl_->offsets[id + 1] - begin - 1;
  return {id, impl_->file->read(begin, len), impl_->tag_of(id)};
}

std::vector<Sentence> Corpus::gather(std::span<const std::uint64_t> ids) const {
  std::vector<Sentence> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(at(id));
  return out;
}

std::vector<Sentence> Corpus::all() const {
  if (impl_ && !impl_->file) return impl_->sentences;
  std::vector<Sentence> out;
  out.reserve(size());
  for (std::uint64_t i = 0; i < size(); ++i) out.push_back(at(i));
  return out;
}

const CorpusStats& Corpus::stats() const {
  static const CorpusStats kEmpty{};
  return impl_ ? impl_->stats : kEmpty;
}

std::vector<std::uint64_t> sample_uniform_ids(const Corpus& corpus, std::size_t n, std::uint64_t seed) {
  if (n > corpus.size()) {
    throw Error(ErrorCode::kInsufficientCorpus,
                "requested " + std::to_string(n) + " sentences from a corpus of " + std::to_string(corpus.size()));
  }
  Rng rng(derive_seed(seed, corpus.content_hash()));
  return sample_without_replacement(rng, corpus.size(), n);
}

std::vector<Sentence> sample_uniform(const Corpus& corpus, std::size_t n, std::uint64_t seed) {
  auto ids = sample_uniform_ids(corpus, n, seed);
  return corpus.gather(ids);
}

std::vector<RawDocument> read_raw_documents(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::vector<RawDocument> docs;
  std::string line;
  const bool records = path.extension() == ".jsonl";
  const std::string stem_tag = path.stem().string();
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    if (records) {
      auto rec = json::parse(line);
      docs.push_back({rec.at("text").get<std::string>(), rec.value("source", stem_tag)});
    } else {
      docs.push_back({line, stem_tag});
    }
  }
  return docs;
}

}  // namespace feateval

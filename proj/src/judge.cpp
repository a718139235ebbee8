#include "feateval/judge.hpp"

#include <omp.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <unordered_set>

#include "feateval/assets.hpp"
#include "feateval/error.hpp"
#include "feateval/random.hpp"
#include "feateval/text.hpp"

namespace feateval {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view judge_purpose_name(JudgePurpose purpose) {
  switch (purpose) {
    case JudgePurpose::kSynthetic: return "synthetic";
    case JudgePurpose::kRating: return "rating";
    case JudgePurpose::kSteeringRating: return "steering_rating";
    case JudgePurpose::kExplain: return "explain";
  }
  return "unknown";
}

std::uint64_t JudgeUsage::total_calls() const {
  std::uint64_t n = 0;
  for (auto c : calls) n += c;
  return n;
}

JudgeUsage& JudgeUsage::operator+=(const JudgeUsage& other) {
  for (std::size_t i = 0; i < kJudgePurposes; ++i) {
    calls[i] += other.calls[i];
    failed_calls[i] += other.failed_calls[i];
    prompt_tokens[i] += other.prompt_tokens[i];
    completion_tokens[i] += other.completion_tokens[i];
  }
  return *this;
}

JudgeUsage JudgeUsage::operator-(const JudgeUsage& other) const {
  JudgeUsage d = *this;
  for (std::size_t i = 0; i < kJudgePurposes; ++i) {
    d.calls[i] -= other.calls[i];
    d.failed_calls[i] -= other.failed_calls[i];
    d.prompt_tokens[i] -= other.prompt_tokens[i];
    d.completion_tokens[i] -= other.completion_tokens[i];
  }
  return d;
}

json JudgeUsage::to_json() const {
  json j = json::object();
  for (std::size_t i = 0; i < kJudgePurposes; ++i) {
    j[std::string(judge_purpose_name(static_cast<JudgePurpose>(i)))] = {
        {"calls", calls[i]},
        {"failed_calls", failed_calls[i]},
        {"prompt_tokens", prompt_tokens[i]},
        {"completion_tokens", completion_tokens[i]},
    };
  }
  return j;
}

// ---------------------------------------------------------------------------
// prompts

namespace {

std::string quoted_concept(std::string_view description) {
  return "Concept: \"" + std::string(description) + "\"";
}

std::string json_string(std::string_view s) {
  return json(std::string(s)).dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace

std::vector<ChatMessage> synthetic_generation_messages(std::string_view description) {
  return {{"system", std::string(asset("prompts/v1/synthetic_generation.txt"))},
          {"user", quoted_concept(description)}};
}

std::vector<ChatMessage> rating_messages(std::string_view description, std::span<const RatingItem> items) {
  std::string user = quoted_concept(description) + "\n\nSequences:\n{\n";
  for (std::size_t i = 0; i < items.size(); ++i) {
    user += json_string(items[i].id) + ": " + json_string(items[i].text);
    user += i + 1 < items.size() ? ",\n" : "\n";
  }
  user += "}";
  return {{"system", std::string(asset("prompts/v1/rating.txt"))}, {"user", std::move(user)}};
}

// ---------------------------------------------------------------------------
// reply parsing

namespace {

// Reads JSON and Python literals: dicts, lists, tuples, quoted strings of
// either kind, numbers, True/False/None. Trailing commas are accepted.
class LiteralParser {
 public:
  explicit LiteralParser(std::string_view s) : s_(s) {}

  std::optional<ordered_json> parse_all() {
    auto v = value();
    if (!v) return std::nullopt;
    skip_ws();
    if (pos_ != s_.size()) return std::nullopt;
    return v;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool keyword(std::string_view w) {
    if (s_.substr(pos_, w.size()) != w) return false;
    pos_ += w.size();
    return true;
  }

  std::optional<ordered_json> value() {
    if (++depth_ > 64) return std::nullopt;
    struct Guard {
      int& d;
      ~Guard() { --d; }
    } guard{depth_};
    skip_ws();
    if (pos_ >= s_.size()) return std::nullopt;
    char c = s_[pos_];
    if (c == '{') return dict();
    if (c == '[') return sequence('[', ']');
    if (c == '(') return sequence('(', ')');
    if (c == '"' || c == '\'') return string();
    if (keyword("True") || keyword("true")) return ordered_json(true);
    if (keyword("False") || keyword("false")) return ordered_json(false);
    if (keyword("None") || keyword("null")) return ordered_json(nullptr);
    return number();
  }

  std::optional<ordered_json> dict() {
    ++pos_;
    ordered_json out = ordered_json::object();
    while (true) {
      if (eat('}')) return out;
      auto key = value();
      if (!key) return std::nullopt;
      std::string k;
      if (key->is_string()) {
        k = key->get<std::string>();
      } else if (key->is_number()) {
        k = key->dump();
      } else {
        return std::nullopt;
      }
      if (!eat(':')) return std::nullopt;
      auto v = value();
      if (!v) return std::nullopt;
      if (!out.contains(k)) out[k] = std::move(*v);
      if (eat(',')) continue;
      if (eat('}')) return out;
      return std::nullopt;
    }
  }

  std::optional<ordered_json> sequence(char open, char close) {
    (void)open;
    ++pos_;
    ordered_json out = ordered_json::array();
    while (true) {
      if (eat(close)) return out;
      auto v = value();
      if (!v) return std::nullopt;
      out.push_back(std::move(*v));
      if (eat(',')) continue;
      if (eat(close)) return out;
      return std::nullopt;
    }
  }

  static void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }

  std::optional<ordered_json> string() {
    const char quote = s_[pos_++];
    std::string out;
    while (pos_ < s_.size()) {
      char c = s_[pos_++];
      if (c == quote) return ordered_json(text::sanitize_utf8(out));
      if (c != '\\') {
        out += c;
        continue;
      }
      if (pos_ >= s_.size()) return std::nullopt;
      char e = s_[pos_++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        case '0': out += '\0'; break;
        case 'u': {
          if (pos_ + 4 > s_.size()) return std::nullopt;
          std::uint32_t cp = 0;
          for (int i = 0; i < 4; ++i) {
            char h = s_[pos_++];
            if (!std::isxdigit(static_cast<unsigned char>(h))) return std::nullopt;
            cp = cp * 16 + static_cast<std::uint32_t>(std::isdigit(static_cast<unsigned char>(h)) ? h - '0'
                                                                                                 : (std::tolower(h) - 'a' + 10));
          }
          if (cp >= 0xD800 && cp < 0xDC00 && pos_ + 6 <= s_.size() && s_[pos_] == '\\' && s_[pos_ + 1] == 'u') {
            std::uint32_t lo = 0;
            bool ok = true;
            for (int i = 0; i < 4; ++i) {
              char h = s_[pos_ + 2 + static_cast<std::size_t>(i)];
              if (!std::isxdigit(static_cast<unsigned char>(h))) ok = false;
              lo = lo * 16 + static_cast<std::uint32_t>(std::isdigit(static_cast<unsigned char>(h)) ? h - '0'
                                                                                                   : (std::tolower(h) - 'a' + 10));
            }
            if (ok && lo >= 0xDC00 && lo < 0xE000) {
              pos_ += 6;
              cp = 0x10000 + ((cp - 0xD800) << 10) + (lo - 0xDC00);
            }
          }
          append_utf8(out, cp);
          break;
        }
        case '\n': break;  // line continuation
        default: out += e; break;
      }
    }
    return std::nullopt;
  }

  std::optional<ordered_json> number() {
    std::size_t start = pos_;
    if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
    bool digits = false, fractional = false;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_, digits = true;
    if (pos_ < s_.size() && s_[pos_] == '.') {
      fractional = true;
      ++pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_, digits = true;
    }
    if (!digits) return std::nullopt;
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      fractional = true;
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    std::string tok(s_.substr(start, pos_ - start));
    if (!tok.empty() && tok[0] == '+') tok.erase(0, 1);
    try {
      if (!fractional) return ordered_json(std::stoll(tok));
      return ordered_json(std::stod(tok));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int depth_ = 0;
};

std::optional<std::string_view> outermost(std::string_view reply, char open, char close) {
  auto a = reply.find(open);
  auto b = reply.rfind(close);
  if (a == std::string_view::npos || b == std::string_view::npos || b < a) return std::nullopt;
  return reply.substr(a, b - a + 1);
}

std::optional<int> as_rating(const json& v) {
  if (v.is_number_integer()) {
    auto r = v.get<long long>();
    if (r >= 0 && r <= 2) return static_cast<int>(r);
    return std::nullopt;
  }
  if (v.is_number_float()) {
    double d = v.get<double>();
    if ((d == 0.0 || d == 1.0 || d == 2.0)) return static_cast<int>(d);
    return std::nullopt;
  }
  if (v.is_string()) {
    auto s = text::trim(v.get<std::string>());
    if (s == "0" || s == "1" || s == "2") return s[0] - '0';
  }
  return std::nullopt;
}

}  // namespace

std::optional<ordered_json> parse_literal(std::string_view text) {
  auto trimmed = text::trim(text);
  try {
    return ordered_json::parse(trimmed);
  } catch (const json::exception&) {
  }
  return LiteralParser(trimmed).parse_all();
}

std::optional<std::vector<std::string>> parse_string_list(std::string_view reply) {
  auto inner = outermost(reply, '[', ']');
  if (!inner) return std::nullopt;
  auto v = parse_literal(*inner);
  if (!v || !v->is_array()) return std::nullopt;
  std::vector<std::string> out;
  for (const auto& e : *v) {
    if (e.is_string()) out.push_back(e.get<std::string>());
  }
  return out;
}

std::optional<std::vector<std::pair<std::string, json>>> parse_rating_map(std::string_view reply) {
  auto inner = outermost(reply, '{', '}');
  if (!inner) return std::nullopt;
  auto v = parse_literal(*inner);
  if (!v || !v->is_object()) return std::nullopt;
  std::vector<std::pair<std::string, json>> out;
  for (auto it = v->begin(); it != v->end(); ++it) out.emplace_back(it.key(), json(it.value()));
  return out;
}

// ---------------------------------------------------------------------------
// client

JudgeClient::JudgeClient(ChatBackend& backend, JudgeOptions options) : backend_(backend), options_(options) {
  if (options_.max_concurrency == 0) options_.max_concurrency = 1;
}

JudgeUsage JudgeClient::usage() const {
  std::lock_guard lock(mu_);
  return usage_;
}

ChatReply JudgeClient::complete(const ChatRequest& request, JudgePurpose purpose) {
  const auto p = static_cast<std::size_t>(purpose);
  ChatRequest req = request;
  if (!req.temperature) req.temperature = options_.temperature;
  try {
    ChatReply reply = backend_.complete(req);
    std::lock_guard lock(mu_);
    usage_.calls[p] += 1;
    usage_.prompt_tokens[p] += reply.prompt_tokens;
    usage_.completion_tokens[p] += reply.completion_tokens;
    return reply;
  } catch (...) {
    std::lock_guard lock(mu_);
    usage_.calls[p] += 1;
    usage_.failed_calls[p] += 1;
    throw;
  }
}

SyntheticBatch JudgeClient::generate_synthetic(const std::string& description, std::size_t n_requests,
                                               std::uint64_t seed) {
  if (text::trim(description).empty()) throw ConfigError("description", "must be non-empty");
  if (n_requests == 0) throw ConfigError("n_synth_requests", "must be at least 1");
  const auto messages = synthetic_generation_messages(description);

  std::vector<std::optional<std::vector<std::string>>> replies(n_requests);
  const auto n = static_cast<std::int64_t>(n_requests);
  const int threads = static_cast<int>(std::min<std::size_t>(options_.max_concurrency, n_requests));
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1)
  for (std::int64_t r = 0; r < n; ++r) {
    const std::uint64_t request_seed = derive_seed(seed, static_cast<std::uint64_t>(r));
    for (int attempt = 0; attempt < 2 && !replies[static_cast<std::size_t>(r)]; ++attempt) {
      ChatRequest req{messages, attempt == 0 ? request_seed : derive_seed(request_seed, "retry"), std::nullopt};
      try {
        auto parsed = parse_string_list(complete(req, JudgePurpose::kSynthetic).content);
        if (parsed) {
          replies[static_cast<std::size_t>(r)] = std::move(parsed);
        } else {
          std::lock_guard lock(mu_);
          usage_.failed_calls[static_cast<std::size_t>(JudgePurpose::kSynthetic)] += 1;
        }
      } catch (const std::exception&) {  // must not escape the parallel region
      }
    }
  }

  SyntheticBatch batch;
  batch.description = description;
  batch.requests = n_requests;
  std::unordered_set<std::string> seen;
  for (auto& reply : replies) {
    if (!reply) {
      ++batch.failed_requests;
      continue;
    }
    for (auto& s : *reply) {
      std::string t(text::trim(s));
      if (t.empty()) continue;
      if (!seen.insert(t).second) {
        ++batch.duplicates_removed;
        continue;
      }
      batch.samples.push_back(std::move(t));
    }
  }
  if (batch.failed_requests == n_requests) {
    throw Error(ErrorCode::kJudgeFailure, "all " + std::to_string(n_requests) + " synthetic generation requests failed");
  }
  return batch;
}

RatingResult JudgeClient::rate(const std::string& description, std::span<const RatingItem> items,
                               std::size_t batch_size, std::uint64_t seed, JudgePurpose purpose) {
  if (batch_size == 0) throw ConfigError("rating_batch_size", "must be at least 1");
  RatingResult result;
  if (items.empty()) return result;

  std::vector<std::optional<int>> rating(items.size());
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!index.emplace(items[i].id, i).second) throw ConfigError("rating", "duplicate sample id " + items[i].id);
  }

  auto run_round = [&](const std::vector<std::size_t>& pending, std::uint64_t round_seed) {
    const std::size_t n_batches = (pending.size() + batch_size - 1) / batch_size;
    const int threads = static_cast<int>(std::min<std::size_t>(options_.max_concurrency, n_batches));
    std::vector<std::vector<std::pair<std::size_t, int>>> found(n_batches);
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(n_batches); ++b) {
      const auto bi = static_cast<std::size_t>(b);
      const std::size_t lo = bi * batch_size, hi = std::min(pending.size(), lo + batch_size);
      std::vector<RatingItem> batch;
      std::map<std::string, std::size_t> in_batch;
      for (std::size_t k = lo; k < hi; ++k) {
        batch.push_back(items[pending[k]]);
        in_batch.emplace(items[pending[k]].id, pending[k]);
      }
      ChatRequest req{rating_messages(description, batch), derive_seed(round_seed, static_cast<std::uint64_t>(b)),
                      std::nullopt};
      try {
        auto parsed = parse_rating_map(complete(req, purpose).content);
        if (!parsed) {
          std::lock_guard lock(mu_);
          usage_.failed_calls[static_cast<std::size_t>(purpose)] += 1;
          continue;
        }
        for (const auto& [key, value] : *parsed) {
          auto it = in_batch.find(std::string(text::trim(key)));
          if (it == in_batch.end()) continue;
          if (auto r = as_rating(value)) found[bi].emplace_back(it->second, *r);
          in_batch.erase(it);  // first occurrence wins
        }
      } catch (const std::exception&) {  // must not escape the parallel region
      }
    }
    for (const auto& f : found) {
      for (auto [i, r] : f) rating[i] = r;
    }
    return n_batches;
  };

  std::vector<std::size_t> pending(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) pending[i] = i;
  result.calls = run_round(pending, derive_seed(seed, std::uint64_t{0}));

  std::vector<std::size_t> retry;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!rating[i]) retry.push_back(i);
  }
  if (!retry.empty()) {
    result.retry_calls = run_round(retry, derive_seed(seed, std::uint64_t{1}));
    result.calls += result.retry_calls;
  }

  for (std::size_t i = 0; i < items.size(); ++i) {
    if (rating[i]) {
      result.ratings.push_back({items[i].id, *rating[i]});
    } else {
      ++result.dropped;
    }
  }
  if (result.ratings.empty()) {
    throw Error(ErrorCode::kJudgeFailure, "no rating could be parsed for " + std::to_string(items.size()) + " samples");
  }
  return result;
}

// ---------------------------------------------------------------------------
// mock judge

namespace {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "the",  "and",  "for",  "with",  "that",  "this",   "from",  "into", "are",   "was",  "were",  "word",
      "words", "token", "tokens", "presence", "mentions", "mention", "related", "concept", "references",
      "reference", "text", "about", "its", "their", "such", "like", "use", "usage", "phrase", "phrases"};
  return words;
}

const std::vector<std::string>& sentence_templates() {
  static const std::vector<std::string> t = {
      "I could not stop thinking about the {} all week.",
      "Everyone at the party was talking about the {}.",
      "She wrote a short essay on the {} for class.",
      "The {} was the main topic of the evening news.",
      "He pointed at the {} and laughed.",
      "Have you ever seen a {} up close?",
      "My grandfather kept a {} in his garage.",
      "The museum opened a new exhibit about the {}.",
      "A {} appeared in the background of the photo.",
      "They argued for hours about the {}.",
      "Nobody expected the {} to be so impressive.",
      "The children drew a picture of a {}.",
      "Our guide told us a story about a {}.",
      "I read a long article about the {} yesterday.",
      "The {} made everyone in the room go quiet.",
      "We finally bought a {} after months of saving.",
  };
  return t;
}

const std::vector<std::string>& sentence_openers() {
  static const std::vector<std::string> o = {"", "Honestly, ", "Last year, ", "In the end, ", "Surprisingly, "};
  return o;
}

std::uint64_t word_count(std::string_view s) { return text::word_spans(s).size(); }

std::string normalize_word(std::string_view w) {
  std::size_t a = 0, b = w.size();
  while (a < b && !std::isalnum(static_cast<unsigned char>(w[a])) && static_cast<unsigned char>(w[a]) < 0x80) ++a;
  while (b > a && !std::isalnum(static_cast<unsigned char>(w[b - 1])) && static_cast<unsigned char>(w[b - 1]) < 0x80) --b;
  return text::to_lower_ascii(w.substr(a, b - a));
}

// Text between the first `Concept: "` and the closing quote of that line.
std::string concept_of(std::string_view user) {
  constexpr std::string_view marker = "Concept: \"";
  auto a = user.find(marker);
  if (a == std::string_view::npos) return {};
  a += marker.size();
  auto eol = user.find('\n', a);
  auto line = user.substr(a, eol == std::string_view::npos ? std::string_view::npos : eol - a);
  auto b = line.rfind('"');
  return std::string(b == std::string_view::npos ? line : line.substr(0, b));
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

std::string_view first_line(std::string_view s) { return s.substr(0, s.find('\n')); }

}  // namespace

MockJudge::MockJudge(std::vector<MockConcept> registry, std::size_t samples_per_request)
    : registry_(std::move(registry)), samples_per_request_(samples_per_request) {
  for (auto& c : registry_) {
    for (auto& w : c.lexicon) w = text::to_lower_ascii(w);
    for (auto& w : c.near_miss) w = text::to_lower_ascii(w);
  }
}

void MockJudge::set_fault(Fault fault) { fault_ = std::move(fault); }

MockConcept MockJudge::concept_for(std::string_view description) const {
  const auto key = text::to_lower_ascii(text::trim(description));
  for (const auto& c : registry_) {
    if (text::to_lower_ascii(text::trim(c.description)) == key) return c;
  }
  MockConcept c;
  c.description = std::string(description);
  std::set<std::string> seen;
  for (auto& t : text::terms(description)) {
    if (t.size() < 3 || stopwords().count(t) || !seen.insert(t).second) continue;
    c.lexicon.push_back(t);
  }
  return c;
}

int MockJudge::rate_text(const MockConcept& concept_entry, std::string_view text_in) {
  auto terms = text::terms(text_in);
  std::unordered_set<std::string> present(terms.begin(), terms.end());
  for (const auto& w : concept_entry.lexicon) {
    if (present.count(w)) return 2;
  }
  for (const auto& w : concept_entry.near_miss) {
    if (present.count(w)) return 1;
  }
  return 0;
}

ChatReply MockJudge::complete(const ChatRequest& request) {
  const std::uint64_t call = calls_.fetch_add(1);
  std::optional<std::string> content;
  if (fault_) content = fault_(request, call);
  if (!content) {
    std::string_view system = request.messages.empty() ? std::string_view() : request.messages.front().content;
    if (system == asset("prompts/v1/synthetic_generation.txt")) {
      content = generate(request);
    } else if (system == asset("prompts/v1/rating.txt")) {
      content = rate(request);
    } else if (starts_with(system, first_line(asset("prompts/v1/explainer_delimiter_system.txt")))) {
      content = explain(request);
    } else {
      content = "";
    }
  }
  ChatReply reply;
  reply.content = std::move(*content);
  for (const auto& m : request.messages) reply.prompt_tokens += word_count(m.content);
  reply.completion_tokens = word_count(reply.content);
  return reply;
}

std::string MockJudge::generate(const ChatRequest& request) const {
  const auto concept_entry = concept_for(concept_of(request.messages.back().content));
  json out = json::array();
  if (concept_entry.lexicon.empty()) return out.dump();
  Rng rng(derive_seed(request.seed.value_or(0), "mock-generate"));
  const auto& templates = sentence_templates();
  const auto& openers = sentence_openers();
  for (std::size_t i = 0; i < samples_per_request_; ++i) {
    const auto& word = concept_entry.lexicon[uniform_below(rng, concept_entry.lexicon.size())];
    std::string t = templates[uniform_below(rng, templates.size())];
    const auto& opener = openers[uniform_below(rng, openers.size())];
    t.replace(t.find("{}"), 2, word);
    if (!opener.empty()) t[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(t[0])));
    out.push_back(opener + t);
  }
  return out.dump();
}

std::string MockJudge::rate(const ChatRequest& request) const {
  const auto& user = request.messages.back().content;
  const auto concept_entry = concept_for(concept_of(user));
  auto at = user.find("Sequences:");
  if (at == std::string::npos) return "{}";
  auto seqs = parse_literal(std::string_view(user).substr(at + 10));
  if (!seqs || !seqs->is_object()) return "{}";
  std::string out = "{";
  bool first = true;
  for (auto it = seqs->begin(); it != seqs->end(); ++it) {
    if (!first) out += ", ";
    first = false;
    const int r = it.value().is_string() ? rate_text(concept_entry, it.value().get<std::string>()) : 0;
    out += json(it.key()).dump() + ": " + std::to_string(r);
  }
  return out + "}";
}

std::string MockJudge::explain(const ChatRequest& request) const {
  const auto& user = request.messages.back().content;
  std::map<std::string, double> weight;
  std::size_t pos = 0;
  while (pos < user.size()) {
    auto eol = user.find('\n', pos);
    if (eol == std::string::npos) eol = user.size();
    std::string_view line(user.data() + pos, eol - pos);
    pos = eol + 1;
    if (starts_with(line, "Most relevant tokens:")) {
      auto dict = parse_literal(line.substr(21));
      if (!dict || !dict->is_object()) continue;
      for (auto it = dict->begin(); it != dict->end(); ++it) {
        if (it.value().is_number()) weight[normalize_word(it.key())] += it.value().get<double>();
      }
    } else if (starts_with(line, "Sentence ")) {
      for (std::size_t i = 0; i < line.size();) {
        if (line[i] != '{') {
          ++i;
          continue;
        }
        const bool dbl = i + 1 < line.size() && line[i + 1] == '{';
        const std::size_t open = i + (dbl ? 2 : 1);
        auto close = line.find('}', open);
        if (close == std::string_view::npos) break;
        weight[normalize_word(line.substr(open, close - open))] += dbl ? 2.0 : 1.0;
        i = close + (dbl ? 2 : 1);
      }
    }
  }
  weight.erase("");
  if (weight.empty()) return "Concept: NO CONCEPT FOUND";
  auto best = weight.begin();
  for (auto it = weight.begin(); it != weight.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  for (const auto& c : registry_) {
    if (std::find(c.lexicon.begin(), c.lexicon.end(), best->first) != c.lexicon.end()) {
      return "Concept: " + c.description;
    }
  }
  return "Concept: Presence of the word '" + best->first + "'.";
}

}  // namespace feateval

#include "feateval/describer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_map>

#include "feateval/assets.hpp"
#include "feateval/error.hpp"
#include "feateval/kernels.hpp"
#include "feateval/random.hpp"
#include "feateval/text.hpp"

namespace feateval {

using nlohmann::json;

namespace {

constexpr std::size_t kNumericTopWords = 5;
constexpr double kDoubleDelimiterAt = 4.0;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string_view description_method_name(DescriptionMethod method) {
  switch (method) {
    case DescriptionMethod::kMaxActStar: return "maxact_star";
    case DescriptionMethod::kTfidf: return "tfidf";
    case DescriptionMethod::kUnembedding: return "unembedding";
    case DescriptionMethod::kExternal: return "external";
  }
  return "external";
}

DescriptionMethod parse_description_method(std::string_view name) {
  if (name == "maxact_star") return DescriptionMethod::kMaxActStar;
  if (name == "tfidf") return DescriptionMethod::kTfidf;
  if (name == "unembedding") return DescriptionMethod::kUnembedding;
  if (name == "external") return DescriptionMethod::kExternal;
  throw ConfigError("method", "unknown description method '" + std::string(name) + "'");
}

json Description::to_json() const {
  return {{"feature", feature.key()},
          {"description", text},
          {"method", description_method_name(method)},
          {"provenance", provenance}};
}

Description Description::from_json(const json& j) {
  Description d;
  d.feature = FeatureHandle::parse(j.at("feature").get<std::string>());
  d.text = j.at("description").get<std::string>();
  d.method = parse_description_method(j.value("method", std::string("external")));
  if (j.contains("provenance")) d.provenance = j["provenance"];
  if (text::trim(d.text).empty()) throw ConfigError("description", "empty description for " + d.feature.key());
  return d;
}

std::string RenderedPrompt::full_text() const {
  std::string out;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (i) out += '\n';
    out += messages[i].content;
  }
  return out;
}

std::string RenderedPrompt::hash() const { return hex64(fnv1a64(full_text())); }

std::vector<ActivationTrace> collect_samples(Provider& provider, const FeatureHandle& feature, const Corpus& corpus,
                                             std::size_t k_pool, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("n_samples", "must be at least 1");
  if (n > k_pool) throw ConfigError("k_pool", "must be at least n_samples");
  if (corpus.size() < n) {
    throw Error(ErrorCode::kInsufficientCorpus,
                "need " + std::to_string(n) + " samples, corpus has " + std::to_string(corpus.size()));
  }
  auto pool = scan_top_activating(provider, feature, corpus, std::min<std::size_t>(k_pool, corpus.size()));
  Rng rng(derive_seed(seed, "collect-samples"));
  auto picks = sample_without_replacement(rng, pool.size(), n);
  std::sort(picks.begin(), picks.end());
  std::vector<ActivationTrace> out;
  out.reserve(n);
  for (auto i : picks) out.push_back(std::move(pool[i]));
  return out;
}

std::vector<double> word_activations(std::string_view sentence, const ActivationTrace& trace) {
  const auto words = text::word_spans(sentence);
  std::vector<double> sum(words.size(), 0.0);
  std::vector<std::size_t> count(words.size(), 0);

  std::vector<text::Span> spans = trace.offsets;
  if (spans.size() != trace.tokens.size()) {
    spans.assign(trace.tokens.size(), {0, 0});
    std::size_t cursor = 0;
    for (std::size_t t = 0; t < trace.tokens.size(); ++t) {
      auto tok = text::trim(trace.tokens[t]);
      if (tok.empty()) continue;
      auto at = sentence.find(tok, cursor);
      if (at == std::string_view::npos) continue;
      spans[t] = {at, at + tok.size()};
      cursor = at + tok.size();
    }
  }

  for (std::size_t t = 0; t < spans.size(); ++t) {
    const auto& s = spans[t];
    if (s.end <= s.begin) continue;
    for (std::size_t k = 0; k < words.size() && words[k].begin < s.end; ++k) {
      if (words[k].end > s.begin) {
        sum[k] += trace.activations[t];
        ++count[k];
      }
    }
  }
  std::vector<double> out(words.size(), 0.0);
  for (std::size_t k = 0; k < words.size(); ++k) {
    if (count[k]) out[k] = sum[k] / static_cast<double>(count[k]);
  }
  return out;
}

namespace {

std::string escape_newlines(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '\n') {
      out += "\\n";
    } else if (c != '\r') {
      out += c;
    }
  }
  return out;
}

std::string delimited_sentence(std::string_view sentence, const std::vector<double>& scaled) {
  const auto words = text::word_spans(sentence);
  std::string out;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < words.size(); ++k) {
    out += escape_newlines(sentence.substr(pos, words[k].begin - pos));
    auto word = sentence.substr(words[k].begin, words[k].end - words[k].begin);
    if (scaled[k] > 0.0 && scaled[k] < kDoubleDelimiterAt) {
      out += "{" + std::string(word) + "}";
    } else if (scaled[k] >= kDoubleDelimiterAt) {
      out += "{{" + std::string(word) + "}}";
    } else {
      out += word;
    }
    pos = words[k].end;
  }
  out += escape_newlines(sentence.substr(pos));
  return out;
}

// Top words by scaled value (ties to the earlier word), rounded, first
// occurrence of a repeated word wins.
nlohmann::ordered_json top_word_dict(std::string_view sentence, const std::vector<double>& scaled) {
  const auto words = text::word_spans(sentence);
  std::vector<std::size_t> order(words.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scaled[a] > scaled[b]; });
  nlohmann::ordered_json dict = nlohmann::ordered_json::object();
  for (auto k : order) {
    if (dict.size() >= kNumericTopWords) break;
    const long v = std::lround(scaled[k]);
    if (v < 1) break;
    std::string word(sentence.substr(words[k].begin, words[k].end - words[k].begin));
    if (!dict.contains(word)) dict[word] = v;
  }
  return dict;
}

std::string dict_text(const nlohmann::ordered_json& d) {
  std::string out = "{";
  bool first = true;
  for (auto it = d.begin(); it != d.end(); ++it) {
    if (!first) out += ", ";
    first = false;
    out += json(it.key()).dump(-1, ' ', false, json::error_handler_t::replace) + ": " + it.value().dump();
  }
  return out + "}";
}

std::string numeric_block(std::size_t k, std::string_view sentence, const nlohmann::ordered_json& dict) {
  return "Sentence " + std::to_string(k) + ": \"" + escape_newlines(sentence) + "\"\nMost relevant tokens: " +
         dict_text(dict) + "\n";
}

const json& shot_bank(PromptMode mode) {
  static const json delimiter = json::parse(asset("prompts/v1/explainer_shots_delimiter.json"));
  static const json numeric = json::parse(asset("prompts/v1/explainer_shots_numeric.json"));
  return mode == PromptMode::kDelimiter ? delimiter : numeric;
}

std::string render_shots(PromptMode mode, std::size_t n_shots) {
  const auto& bank = shot_bank(mode);
  if (n_shots > bank.size()) {
    throw ConfigError("n_shots", "at most " + std::to_string(bank.size()) + " examples are available");
  }
  if (n_shots == 0) return {};
  std::vector<std::string> blocks;
  for (std::size_t i = 0; i < n_shots; ++i) {
    const auto& shot = bank[i];
    std::string block;
    if (mode == PromptMode::kDelimiter) {
      block = "Input example " + std::to_string(i + 1) + ":\n";
      std::size_t k = 1;
      for (const auto& s : shot.at("sentences")) block += "Sentence " + std::to_string(k++) + ": " + s.get<std::string>() + "\n";
    } else {
      block = "EXAMPLE " + std::to_string(i + 1) + "\n";
      std::size_t k = 1;
      for (const auto& s : shot.at("sentences")) {
        nlohmann::ordered_json dict = nlohmann::ordered_json::object();
        for (const auto& t : s.at("tokens")) dict[t.at(0).get<std::string>()] = t.at(1);
        block += numeric_block(k++, s.at("text").get<std::string>(), dict);
      }
    }
    block += "\nExample Output:  \nConcept: " + shot.at("concept").get<std::string>() + "\n";
    blocks.push_back(std::move(block));
  }
  std::string out = mode == PromptMode::kDelimiter ? "\n### Example:\n" : "\n";
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) out += "\n";
    out += blocks[i];
  }
  return out;
}

}  // namespace

RenderedPrompt render_prompt(std::span<const std::string> texts, std::span<const ActivationTrace> traces,
                             const PromptRenderSpec& spec) {
  if (texts.empty()) throw Error(ErrorCode::kEmptySampleSet, "no samples to render");
  if (texts.size() != traces.size()) throw ConfigError("render_prompt", "texts and traces differ in length");

  std::vector<std::vector<double>> words;
  double max_word = 0.0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    words.push_back(word_activations(texts[i], traces[i]));
    for (double v : words.back()) max_word = std::max(max_word, v);
  }
  for (auto& w : words) {
    for (double& v : w) v = max_word > 0.0 ? v * 10.0 / max_word : 0.0;
  }

  const bool delimiter = spec.mode == PromptMode::kDelimiter;
  std::string system(asset(delimiter ? "prompts/v1/explainer_delimiter_system.txt"
                                     : "prompts/v1/explainer_numeric_system.txt"));
  system += render_shots(spec.mode, spec.n_shots);

  std::string user;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (delimiter) {
      user += "Sentence " + std::to_string(i + 1) + ": " + delimited_sentence(texts[i], words[i]) + "\n";
    } else {
      user += numeric_block(i + 1, texts[i], top_word_dict(texts[i], words[i]));
    }
  }
  user += "\n";
  user += asset("prompts/v1/explainer_user_ending.txt");
  return RenderedPrompt{{{"system", std::move(system)}, {"user", std::move(user)}}};
}

std::string extract_concept(std::string_view reply) {
  constexpr std::string_view marker = "Concept:";
  auto at = reply.find(marker);
  if (at == std::string_view::npos) return {};
  auto rest = reply.substr(at + marker.size());
  auto line = text::trim(rest.substr(0, rest.find('\n')));
  if (line.empty()) {
    // Marker alone on its line: take the next non-empty line.
    auto nl = rest.find('\n');
    while (nl != std::string_view::npos && line.empty()) {
      rest = rest.substr(nl + 1);
      nl = rest.find('\n');
      line = text::trim(rest.substr(0, nl));
    }
  }
  if (line.find(kNoConceptFound) != std::string_view::npos) return std::string(kNoConceptFound);
  return std::string(line);
}

Description explain(const FeatureHandle& feature, const RenderedPrompt& prompt, JudgeClient& explainer,
                    std::uint64_t seed) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatRequest req{prompt.messages, attempt == 0 ? seed : derive_seed(seed, "retry"), std::nullopt};
    std::string reply;
    try {
      reply = explainer.complete(req, JudgePurpose::kExplain).content;
    } catch (const Error&) {
      continue;
    }
    auto concept_text = extract_concept(reply);
    if (concept_text.empty()) continue;
    Description d;
    d.feature = feature;
    d.text = std::move(concept_text);
    d.method = DescriptionMethod::kMaxActStar;
    d.provenance = {{"explainer", explainer.model_id()}, {"prompt_hash", prompt.hash()}, {"attempts", attempt + 1}};
    return d;
  }
  throw Error(ErrorCode::kDescribeFailure, "explainer reply for " + feature.key() + " has no 'Concept:' marker");
}

std::vector<TermScore> tfidf_terms(std::span<const std::string> foreground, const Corpus& corpus) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::uint64_t> tf;
  for (const auto& s : foreground) {
    for (auto& t : text::terms(s)) {
      if (tf[t]++ == 0) order.push_back(t);
    }
  }
  if (order.empty()) return {};
  const auto df = document_frequency(corpus, order);
  const double n = static_cast<double>(corpus.size());
  std::vector<TermScore> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (df[i] == 0) continue;  // foreground text outside the corpus contributes no evidence
    const double score = static_cast<double>(tf[order[i]]) * std::log(n / static_cast<double>(df[i]));
    if (score > 0.0) out.push_back({order[i], score});
  }
  std::stable_sort(out.begin(), out.end(), [](const TermScore& a, const TermScore& b) { return a.score > b.score; });
  return out;
}

Description tfidf_describe(Provider& provider, const FeatureHandle& feature, const Corpus& corpus,
                           std::size_t n_samples, std::size_t top_terms) {
  if (n_samples == 0 || corpus.empty()) throw Error(ErrorCode::kDescribeFailure, "empty TF-IDF foreground");
  auto top = scan_top_activating(provider, feature, corpus, std::min<std::size_t>(n_samples, corpus.size()));
  std::vector<std::string> foreground;
  json ids = json::array();
  for (const auto& t : top) {
    foreground.push_back(corpus.at(t.sentence_id).text);
    ids.push_back(t.sentence_id);
  }
  auto scores = tfidf_terms(foreground, corpus);
  if (scores.empty()) throw Error(ErrorCode::kDescribeFailure, "no TF-IDF term scores above zero for " + feature.key());
  std::string joined;
  for (std::size_t i = 0; i < scores.size() && i < top_terms; ++i) {
    if (i) joined += ' ';
    joined += scores[i].term;
  }
  Description d;
  d.feature = feature;
  d.text = std::move(joined);
  d.method = DescriptionMethod::kTfidf;
  d.provenance = {{"samples", ids}};
  return d;
}

Description unembedding_describe(Provider& provider, const FeatureHandle& feature, std::size_t top_k) {
  auto lw = provider.logit_weights(feature);
  if (lw.vocab.size() != lw.weights.size() || lw.vocab.empty()) {
    throw Error(ErrorCode::kProtocolError, "logit weight vector and vocabulary differ in length");
  }
  auto idx = top_k_indices(lw.weights, top_k);
  std::string joined;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i) joined += ", ";
    joined += lw.vocab[idx[i]];
  }
  Description d;
  d.feature = feature;
  d.text = std::move(joined);
  d.method = DescriptionMethod::kUnembedding;
  d.provenance = {{"top_k", top_k}};
  return d;
}

}  // namespace feateval

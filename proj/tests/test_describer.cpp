#include <doctest.h>

#include <cmath>
#include <algorithm>

#include "feateval/describer.hpp"
#include "feateval/error.hpp"
#include "feateval/kernels.hpp"
#include "prompt_cases.hpp"
#include "worlds.hpp"

using namespace feateval;
using namespace feateval::testing;

namespace {

std::string last_sentence_line(const RenderedPrompt& p) {
  const auto& user = p.messages.back().content;
  auto at = user.rfind("Sentence 1:");
  REQUIRE(at != std::string::npos);
  return user.substr(at, user.find('\n', at) - at);
}

ActivationTrace word_trace(const std::string& text, std::vector<double> acts) {
  std::vector<std::string> tokens;
  std::vector<text::Span> spans;
  for (const auto& t : text::tokenize(text)) {
    tokens.push_back(t.text);
    spans.push_back(t.span);
  }
  REQUIRE(tokens.size() == acts.size());
  return ActivationTrace::make(0, tokens, acts, spans);
}

int error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return static_cast<int>(e.code());
  }
  return -1;
}

}  // namespace

TEST_CASE("delimiter thresholds on the scaled intensity") {
  // Largest word maps to 10; 4 and up is double-braced, anything above 0 single.
  std::vector<std::string> texts = {"a b c d"};
  std::vector<ActivationTrace> traces = {word_trace(texts[0], {5.0, 2.0, 1.95, 0.0})};
  auto p = render_prompt(texts, traces, {PromptMode::kDelimiter, 0, 1});
  CHECK(last_sentence_line(p) == "Sentence 1: {{a}} {{b}} {c} d");

  // Negative activations are never highlighted.
  traces = {word_trace(texts[0], {-1.0, 3.0, 0.0, 0.2})};
  p = render_prompt(texts, traces, {PromptMode::kDelimiter, 0, 1});
  CHECK(last_sentence_line(p) == "Sentence 1: a {{b}} c {d}");
}

TEST_CASE("word activation averages its tokens") {
  auto trace = word_trace("The volcano's lava.", {0.0, 6.0, 2.0, 0.0, 3.0, 1.0});
  auto w = word_activations("The volcano's lava.", trace);
  REQUIRE(w.size() == 3);
  CHECK(w[0] == 0.0);
  CHECK(w[1] == doctest::Approx(8.0 / 3.0));
  CHECK(w[2] == doctest::Approx(2.0));
}

TEST_CASE("tokens without offsets are located by search") {
  auto trace = ActivationTrace::make(0, {"lava", "flows"}, {4.0, 2.0}, {});
  auto w = word_activations("lava flows", trace);
  CHECK(w == std::vector<double>{4.0, 2.0});
}

TEST_CASE("rendered prompts match the frozen fixtures") {
  auto s = prompt_samples();
  for (const auto& c : prompt_cases()) {
    CAPTURE(c.name);
    auto p = render_prompt(s.texts, s.traces, c.spec);
    CHECK(p.full_text() == read_fixture(prompt_fixture(c.name)));
    CHECK(p.messages.size() == 2);
    CHECK(p.hash().size() == 16);
  }
}

TEST_CASE("more shots than the example bank is a config error") {
  auto s = prompt_samples();
  CHECK_THROWS_AS(render_prompt(s.texts, s.traces, {PromptMode::kDelimiter, 50, 3}), ConfigError);
}

TEST_CASE("concept extraction") {
  CHECK(extract_concept("Thinking...\nConcept: Volcanic activity.\nMore") == "Volcanic activity.");
  CHECK(extract_concept("Concept:\n\n  Lava  \n") == "Lava");
  CHECK(extract_concept("Concept: NO CONCEPT FOUND, sorry") == kNoConceptFound);
  CHECK(extract_concept("I think it is about lava").empty());
}

TEST_CASE("explain retries a reply without the marker once") {
  auto s = prompt_samples();
  auto prompt = render_prompt(s.texts, s.traces, {PromptMode::kDelimiter, 2, 3});
  MockJudge mock(registry());
  JudgeClient explainer(mock);
  FeatureHandle f{"planted", 0, FeatureKind::kNeuron, 0, std::nullopt};

  auto d = explain(f, prompt, explainer, 5);
  CHECK(d.text == "Volcanoes and lava");
  CHECK(d.method == DescriptionMethod::kMaxActStar);
  CHECK(d.provenance["attempts"] == 1);

  mock.set_fault([](const ChatRequest&, std::uint64_t i) -> std::optional<std::string> {
    if (i == 1) return "I am not sure.";
    return std::nullopt;
  });
  d = explain(f, prompt, explainer, 5);
  CHECK(d.provenance["attempts"] == 2);

  mock.set_fault([](const ChatRequest&, std::uint64_t) -> std::optional<std::string> { return "no idea"; });
  CHECK(error_code([&] { explain(f, prompt, explainer, 5); }) == static_cast<int>(ErrorCode::kDescribeFailure));
  CHECK(explainer.usage().calls[static_cast<std::size_t>(JudgePurpose::kExplain)] == 5);
}

TEST_CASE("tf-idf ranks by score with first-occurrence ties") {
  // df over {x y, x z, y w, q}: x 2, y 2, z 1, w 1.  N = 4.
  // Foreground {z x, w}: z ln4, x ln2, w ln4 -> z, w, x.
  auto corpus = Corpus::from_sentences({{0, "x y", ""}, {1, "x z", ""}, {2, "y w", ""}, {3, "q", ""}});
  std::vector<std::string> fg = {"Z x", "w unseen"};
  auto terms = tfidf_terms(fg, corpus);
  REQUIRE(terms.size() == 3);
  CHECK(terms[0].term == "z");
  CHECK(terms[1].term == "w");
  CHECK(terms[2].term == "x");
  CHECK(terms[0].score == doctest::Approx(std::log(4.0)));
  CHECK(terms[2].score == doctest::Approx(std::log(2.0)));

  std::vector<std::string> everywhere = {"x"};
  auto only = Corpus::from_sentences({{0, "x", ""}, {1, "x", ""}});
  CHECK(tfidf_terms(everywhere, only).empty());
}

TEST_CASE("unembedding top-k breaks ties to the lower index") {
  std::vector<double> w = {0.1, 0.9, 0.3, 0.9, 0.0};
  CHECK(top_k_indices(w, 5) == std::vector<std::uint64_t>{1, 3, 2, 0, 4});

  PlantedModel m;
  m.vocab = {"a", "b", "c", "d", "e"};
  m.unembedding = {{0.1, 0.9, 0.3, 0.9, 0.0}};
  PlantedFeature f;
  f.decoder = {1.0};
  m.features = {f};
  SyntheticProvider provider(m);
  auto d = unembedding_describe(provider, provider.handle(0), 3);
  CHECK(d.text == "b, d, c");
  CHECK(d.method == DescriptionMethod::kUnembedding);
}

TEST_CASE("sample collection is seeded and keeps rank order") {
  World w;
  auto f = w.feature(0);
  auto a = collect_samples(*w.provider, f, w.corpus, 100, 15, 11);
  auto b = collect_samples(*w.provider, f, w.corpus, 100, 15, 11);
  auto c = collect_samples(*w.provider, f, w.corpus, 100, 15, 12);
  REQUIRE(a.size() == 15);
  std::vector<std::uint64_t> ia, ib, ic;
  for (auto& t : a) ia.push_back(t.sentence_id);
  for (auto& t : b) ib.push_back(t.sentence_id);
  for (auto& t : c) ic.push_back(t.sentence_id);
  CHECK(ia == ib);
  CHECK(ia != ic);

  auto pool = scan_top_activating(*w.provider, f, w.corpus, 100);
  std::vector<std::uint64_t> order;
  for (auto& t : pool) order.push_back(t.sentence_id);
  std::size_t last = 0;
  for (auto id : ia) {
    auto pos = std::find(order.begin(), order.end(), id);
    REQUIRE(pos != order.end());
    auto at = static_cast<std::size_t>(pos - order.begin());
    CHECK(at >= last);
    last = at;
  }

  CHECK_THROWS_AS(collect_samples(*w.provider, f, w.corpus, 10, 15, 1), ConfigError);
  auto tiny = Corpus::from_sentences({{0, "lava", ""}});
  CHECK(error_code([&] { collect_samples(*w.provider, f, tiny, 100, 15, 1); }) ==
        static_cast<int>(ErrorCode::kInsufficientCorpus));
}

TEST_CASE("description JSON round trip") {
  Description d{FeatureHandle{"gpt2", 6, FeatureKind::kSaeLatent, 1234, 3.5}, "Legal contracts",
                DescriptionMethod::kTfidf, {{"samples", {1, 2}}}};
  auto back = Description::from_json(d.to_json());
  CHECK(back.to_json() == d.to_json());
  CHECK(back.feature.key() == d.feature.key());
  for (auto m : {DescriptionMethod::kMaxActStar, DescriptionMethod::kTfidf, DescriptionMethod::kUnembedding,
                 DescriptionMethod::kExternal}) {
    CHECK(parse_description_method(description_method_name(m)) == m);
  }
  CHECK_THROWS_AS(parse_description_method("gpt"), ConfigError);
}

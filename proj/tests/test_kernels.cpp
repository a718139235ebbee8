#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "feateval/kernels.hpp"
#include "feateval/random.hpp"
#include "feateval/synthetic_provider.hpp"
#include "feateval/text.hpp"

using namespace feateval;

namespace {

// Sentence i holds the words w0 .. w{counts[i]-1}; the lexicon weights of
// those words set its aggregate.
Corpus corpus_with(const std::vector<int>& counts) {
  std::vector<Sentence> s;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::string t = "row " + std::to_string(i);
    for (int k = 0; k < counts[i]; ++k) t += " w" + std::to_string(k);
    s.push_back({i, t, ""});
  }
  return Corpus::from_sentences(s);
}

SyntheticProvider provider_with(std::map<std::string, double> lexicon) {
  PlantedModel m;
  PlantedFeature f;
  f.lexicon = std::move(lexicon);
  m.features = {f};
  return SyntheticProvider(m);
}

}  // namespace

TEST_CASE("top-activating with ties goes to the lower id") {
  // Aggregates [0, 2, 2, 5, 1] via the highest-weighted word present.
  auto corpus = corpus_with({0, 2, 2, 4, 1});
  auto provider = provider_with({{"w0", 1.0}, {"w1", 2.0}, {"w3", 5.0}});
  auto feature = provider.handle(0);
  auto agg = scan_aggregates(provider, feature, corpus);
  std::vector<double> abs;
  for (auto& a : agg) abs.push_back(a.abs_max);
  CHECK(abs == std::vector<double>{0, 2, 2, 5, 1});

  auto top = scan_top_activating(provider, feature, corpus, 3, 2);
  REQUIRE(top.size() == 3);
  CHECK(top[0].sentence_id == 3);
  CHECK(top[1].sentence_id == 1);
  CHECK(top[2].sentence_id == 2);

  CHECK(scan_top_activating(provider, feature, corpus, 10).size() == 5);
}

TEST_CASE("feature firing nowhere returns the first k ids") {
  auto corpus = corpus_with({1, 2, 3, 4});
  auto provider = provider_with({{"absent", 1.0}});
  auto top = scan_top_activating(provider, provider.handle(0), corpus, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0].sentence_id == 0);
  CHECK(top[1].sentence_id == 1);
}

TEST_CASE("parallel kernels equal their serial references") {
  PlantedCorpusSpec spec;
  spec.n_sentences = 3000;
  spec.insertions = {{{"an active volcano", "the lava flow"}, 40}};
  auto corpus = Corpus::from_sentences(make_planted_corpus(spec, 3));
  auto provider = provider_with({{"volcano", 1.0}, {"lava", 0.5}, {"the", 0.01}});
  auto f = provider.handle(0);

  auto a = scan_aggregates(provider, f, corpus, 64);
  auto b = serial::scan_aggregates(provider, f, corpus, 64);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].abs_max == b[i].abs_max);
    CHECK(a[i].signed_max == b[i].signed_max);
  }

  auto ta = scan_top_activating(provider, f, corpus, 100, 64);
  auto tb = serial::scan_top_activating(provider, f, corpus, 100, 64);
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i].sentence_id == tb[i].sentence_id);
    CHECK(ta[i].aggregate == tb[i].aggregate);
  }

  Rng rng(8);
  std::vector<double> scores(5000);
  for (auto& s : scores) s = static_cast<double>(uniform_below(rng, 50));
  CHECK(top_k_indices(scores, 300) == serial::top_k_indices(scores, 300));

  std::vector<std::string> terms = {"the", "volcano", "lava", "nothing"};
  CHECK(document_frequency(corpus, terms) == serial::document_frequency(corpus, terms));
}

TEST_CASE("top_k_indices against sort-all") {
  std::vector<double> s = {0.1, 0.9, 0.3, 0.9, 0.0};
  CHECK(top_k_indices(s, 5) == std::vector<std::uint64_t>{1, 3, 2, 0, 4});
  CHECK(top_k_indices(s, 2) == std::vector<std::uint64_t>{1, 3});
  CHECK(top_k_indices(s, 0).empty());
}

TEST_CASE("document frequency counts sentences, not occurrences") {
  auto corpus = Corpus::from_sentences({{0, "the cat the cat", ""}, {1, "The dog", ""}, {2, "a bird", ""}});
  std::vector<std::string> terms = {"the", "cat", "bird", "fish"};
  CHECK(document_frequency(corpus, terms) == std::vector<std::uint64_t>{2, 1, 1, 0});
}

TEST_CASE("stored aggregate equals recomputed max") {
  auto corpus = corpus_with({3, 0, 1});
  auto provider = provider_with({{"w0", -2.0}, {"w2", 1.5}});
  std::vector<Sentence> all = corpus.all();
  for (auto t : provider.activations(provider.handle(0), all)) {
    double abs = 0.0, sgn = t.activations.empty() ? 0.0 : t.activations[0];
    for (double a : t.activations) {
      abs = std::max(abs, std::fabs(a));
      sgn = std::max(sgn, a);
    }
    CHECK(t.aggregate == abs);
    CHECK(t.signed_max == sgn);
  }
}

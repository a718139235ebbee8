// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "feateval/cli.hpp"
#include "feateval/describer.hpp"
#include "feateval/kernels.hpp"
#include "feateval/metrics.hpp"
#include "feateval/pipeline.hpp"
#include "feateval/synthetic_provider.hpp"
#include "prompt_cases.hpp"
#include "worlds.hpp"

namespace {

using namespace feateval;
using namespace feateval::testing;
namespace fs = std::filesystem;

constexpr double kApTolerance = 1e-12;
constexpr double kMetricOracleSeconds = 5.0;
constexpr double kMonoFloor = 0.99;
constexpr double kMonoSeconds = 60.0;
constexpr double kPolyPurityTolerance = 0.05;
constexpr double kPolyPurityGap = 0.15;
constexpr double kNearMissClarityCeiling = 0.3;
constexpr double kNearMissResponsivenessFloor = 0.8;
constexpr double kNearMissPurityFloor = 0.6;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------
// brute-force oracles

double brute_gini(const std::vector<double>& c, const std::vector<double>& n) {
  std::uint64_t doubled = 0;
  for (double a : c) {
    for (double b : n) doubled += a > b ? 2 : (a == b ? 1 : 0);
  }
  const double pairs = static_cast<double>(c.size()) * static_cast<double>(n.size());
  return std::fabs(static_cast<double>(doubled) - pairs) / pairs;
}

// Precision-recall integration over every distinct score as a threshold,
// counting from scratch at each one.
double brute_ap(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::set<double, std::greater<>> thresholds(pos.begin(), pos.end());
  thresholds.insert(neg.begin(), neg.end());
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (double a : pos) tp += a >= t;
    for (double a : neg) fp += a >= t;
    const double recall = tp / static_cast<double>(pos.size());
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return ap;
}

double direct_faithfulness(const std::vector<double>& factors, const std::vector<double>& r) {
  double r0 = 0.0;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (factors[i] == 0.0) r0 = r[i];
  }
  if (r0 == 1.0) return 0.0;
  double best = r[0];
  for (double v : r) best = v > best ? v : best;
  return (best - r0 > 0.0 ? best - r0 : 0.0) / (1.0 - r0);
}

// Seed derivation restated from its definition, for the steering replay.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
std::uint64_t child(std::uint64_t parent, std::uint64_t tag) { return mix(parent ^ mix(tag + 0x632be59bd9b4e019ULL)); }
std::uint64_t child(std::uint64_t parent, const std::string& tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return child(parent, h);
}

// ---------------------------------------------------------------------------
// criteria

Outcome metric_oracles() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1234);
  std::size_t gini_mismatch = 0, ap_mismatch = 0;
  double worst_ap = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::uniform_int_distribution<int> size(1, 50);
    // Coarse grids force ties; the offset makes half the values negative.
    const int grid = std::uniform_int_distribution<int>(2, 40)(rng);
    auto draw = [&] { return static_cast<double>(std::uniform_int_distribution<int>(0, grid)(rng)) / 4.0 - grid / 8.0; };
    metrics::ActivationSampleSets sets;
    for (int i = size(rng); i > 0; --i) sets.concept_samples.push_back(draw());
    for (int i = size(rng); i > 0; --i) sets.non_concept_samples.push_back(draw());
    if (metrics::gini_abs(sets) != brute_gini(sets.concept_samples, sets.non_concept_samples)) ++gini_mismatch;
    const double diff = std::fabs(metrics::average_precision(sets).value -
                                  brute_ap(sets.concept_samples, sets.non_concept_samples));
    worst_ap = std::max(worst_ap, diff);
    if (diff > kApTolerance) ++ap_mismatch;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.check(gini_mismatch == 0, std::to_string(gini_mismatch) + " gini mismatches");
  o.check(ap_mismatch == 0, std::to_string(ap_mismatch) + " AP mismatches");
  o.check(secs < kMetricOracleSeconds, "runtime " + num(secs, 2) + "s");
  o.note("1000 sets, gini exact, max AP diff " + std::to_string(worst_ap) + ", " + num(secs, 2) + "s");
  return o;
}

Outcome faithfulness_battery() {
  Outcome o;
  const std::vector<double> factors = {-50, -10, -1, 0, 1, 10, 50};
  auto f = [&](std::vector<double> r) { return metrics::faithfulness(metrics::SteeringProfile(factors, r)); };
  o.check(f({0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}) == 0.0, "constant R gives 0");
  // 0.6 - 0.2 is not exact in binary; the example is held to one ulp of 0.5.
  o.check(std::fabs(f({0.0, 0.1, 0.2, 0.2, 0.3, 0.6, 0.4}) - 0.5) <= 0x1.0p-53, "R0=0.2 max=0.6 gives 0.5");
  o.check(f({0.5, 0.9, 1.0, 1.0, 1.0, 0.3, 0.0}) == 0.0, "R0=1 gives 0");
  std::mt19937_64 rng(99);
  std::size_t mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> r(factors.size());
    // Proportions of 50 rated outputs, as the pipeline produces them.
    for (auto& v : r) v = static_cast<double>(std::uniform_int_distribution<int>(0, 50)(rng)) / 50.0;
    if (i % 10 == 0) r[3] = 1.0;
    if (f(r) != direct_faithfulness(factors, r)) ++mismatches;
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " random profile mismatches");
  o.note("3 examples (R0=0.2 case within 1 ulp of 0.5) + 100 random profiles exact");
  return o;
}

struct Shared {
  World world;
  EvaluationReport mono;
  double mono_seconds = 0.0;
};

Outcome monosemantic(Shared& s) {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  s.mono = s.world.evaluate(0, "Volcanoes and lava");
  s.mono_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto& r = s.mono;
  o.check(r.errors.empty(), "stage errors");
  o.check(r.clarity.present() && *r.clarity.value >= kMonoFloor, "clarity");
  o.check(r.responsiveness.present() && *r.responsiveness.value >= kMonoFloor, "responsiveness");
  o.check(r.purity.present() && *r.purity.value >= kMonoFloor, "purity");
  o.check(s.mono_seconds < kMonoSeconds, "runtime");
  o.note("clarity " + num(r.clarity.value.value_or(-1)) + ", responsiveness " +
         num(r.responsiveness.value.value_or(-1)) + ", purity " + num(r.purity.value.value_or(-1)) + ", " +
         num(s.mono_seconds, 2) + "s");
  return o;
}

Outcome polysemantic(Shared& s) {
  Outcome o;
  auto& w = s.world;
  const std::string description = "Volcanoes and lava";
  auto report = w.evaluate(1, description);
  o.check(report.purity.present(), "purity present");

  // Same rated sample, rebuilt through the stage entry point with the seeds evaluate uses.
  EvaluationConfig config;
  config.seed = kWorldSeed;
  const auto feature = w.feature(1);
  auto aggregates = scan_aggregates(*w.provider, feature, w.corpus);
  JudgeClient judge(*w.judge);
  EvaluationCounts counts;
  std::vector<std::string> warnings;
  auto rated = eval_responsiveness_purity(judge, description, aggregates, w.corpus, config,
                                          feature_seed(config.seed, feature), counts, warnings);

  // Ground truth: a rated sentence carries concept A iff a planted A phrase is in it.
  std::vector<double> pos, neg;
  std::size_t a_hits = 0, b_hits = 0;
  for (const auto& r : rated.ratings) {
    const auto id = std::stoull(r.sample_id);
    const auto sentence = w.corpus.at(id);
    bool a = false, b = false;
    for (const auto& p : kVolcanoPhrases) a = a || sentence.text.find(p) != std::string::npos;
    for (const auto& p : kStringPhrases) b = b || sentence.text.find(p) != std::string::npos;
    a_hits += a;
    b_hits += b;
    if (r.rating == 1) continue;
    (a ? pos : neg).push_back(aggregates[id].signed_max);
  }
  const double oracle = brute_ap(pos, neg);
  const double purity = report.purity.value.value_or(-1);
  const double mono_purity = s.mono.purity.value.value_or(-1);
  o.check(std::fabs(purity - oracle) <= kPolyPurityTolerance, "purity vs planted-truth AP");
  o.check(purity <= mono_purity - kPolyPurityGap, "purity gap to monosemantic");
  o.note("purity " + num(purity) + ", planted-truth AP " + num(oracle) + ", monosemantic purity " + num(mono_purity) +
         ", rated A=" + std::to_string(a_hits) + " B=" + std::to_string(b_hits));
  return o;
}

Outcome near_miss(Shared& s) {
  Outcome o;
  auto r = s.world.evaluate(2, "belt");
  const double c = r.clarity.value.value_or(-1), re = r.responsiveness.value.value_or(-1),
               p = r.purity.value.value_or(-1);
  o.check(r.clarity.present() && c <= kNearMissClarityCeiling, "clarity");
  o.check(r.responsiveness.present() && re >= kNearMissResponsivenessFloor, "responsiveness");
  o.check(r.purity.present() && p >= kNearMissPurityFloor, "purity");
  o.note("clarity " + num(c) + ", responsiveness " + num(re) + ", purity " + num(p));
  return o;
}

Outcome gate(Shared& s) {
  Outcome o;
  auto& w = s.world;
  auto r = w.evaluate(3, broad_concept().description);
  const double c = r.clarity.value.value_or(-1);
  o.check(r.clarity.present() && c < 0.5 && c > 0.15, "clarity near 0.3 (below the gate)");
  o.check(!r.gate_passed, "gate closed");
  o.check(r.faithfulness.present() && *r.faithfulness.value == 0.0, "faithfulness 0");
  o.check(r.provider_usage.generate_calls == 0, "steering generation calls");
  const auto steer = static_cast<std::size_t>(JudgePurpose::kSteeringRating);
  o.check(r.judge_usage.calls[steer] == 0, "continuation rating calls");
  o.check(r.counts.steering_prompts == 0 && r.counts.steering_rated == 0, "steering counts");

  // The stage alone with Clarity pinned at exactly 0.3.
  CountingProvider provider(*w.provider);
  JudgeClient judge(*w.judge);
  EvaluationConfig config;
  EvaluationCounts counts;
  auto f = eval_faithfulness(provider, judge, w.feature(0), "Volcanoes and lava", MetricValue::of(0.3),
                             MetricValue::of(1.0), w.corpus, config, 1, counts);
  o.check(!f.gate_passed && f.faithfulness.value == 0.0, "pinned 0.3 gives 0");
  o.check(provider.generate_calls() == 0 && judge.usage().total_calls() == 0, "pinned 0.3 makes no calls");
  o.note("end-to-end clarity " + num(c) + ", faithfulness " + num(r.faithfulness.value.value_or(-1)) +
         ", generate calls " + std::to_string(r.provider_usage.generate_calls) + ", steering rating calls " +
         std::to_string(r.judge_usage.calls[steer]));
  return o;
}

Outcome faithfulness_replay(Shared& s) {
  Outcome o;
  auto& w = s.world;
  const auto& r = s.mono;
  o.check(r.gate_passed, "monosemantic gate open");
  o.check(r.faithfulness.present(), "faithfulness present");

  EvaluationConfig config;
  const auto feature = w.feature(0);
  const std::uint64_t fseed = child(kWorldSeed, feature.key());
  const std::uint64_t steer = child(fseed, std::string("steering"));
  const auto planted = monosemantic_feature();
  const auto& filler = default_filler_words();
  for (const auto& word : filler) {
    o.check(std::find(planted.steering.emit.begin(), planted.steering.emit.end(), word) == planted.steering.emit.end(),
            "filler word collides with concept");
  }

  std::vector<double> proportions;
  std::set<std::uint64_t> oracle_seeds;
  for (std::size_t j = 0; j < config.steering_factors.size(); ++j) {
    const double f = config.steering_factors[j];
    const double p = std::clamp(0.1 + 0.015 * f, 0.0, 1.0);
    const std::uint64_t seed = child(steer, static_cast<std::uint64_t>(j));
    oracle_seeds.insert(seed);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < config.n_steering_prompts; ++i) {
      std::mt19937_64 rng(child(seed, static_cast<std::uint64_t>(i)));
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      hits += u < p;
    }
    proportions.push_back(static_cast<double>(hits) / static_cast<double>(config.n_steering_prompts));
  }
  std::set<std::uint64_t> engine_seeds;
  for (const auto& obs : w.provider->steering_log()) {
    if (obs.feature_key == feature.key()) engine_seeds.insert(obs.seed);
  }
  o.check(engine_seeds == oracle_seeds, "generation seeds");
  o.check(r.steering_proportions == proportions, "per-factor proportions");
  const double oracle = direct_faithfulness(config.steering_factors, proportions);
  o.check(r.faithfulness.value == oracle, "faithfulness");
  std::string props;
  for (double v : proportions) props += (props.empty() ? "" : ",") + num(v, 2);
  o.note("engine " + num(r.faithfulness.value.value_or(-1), 6) + " == replay " + num(oracle, 6) + " [R " + props +
         "]");
  return o;
}

Outcome prompt_goldens() {
  Outcome o;
  // Delimiter rule on word activations {1, 2, 4}: scaled to {2.5, 5, 10}.
  {
    const std::string text = "alpha beta gamma";
    auto trace = trace_for(0, text, {{"alpha", 1.0}, {"beta", 2.0}, {"gamma", 4.0}});
    std::vector<std::string> texts = {text};
    std::vector<ActivationTrace> traces = {trace};
    auto p = render_prompt(texts, traces, {PromptMode::kDelimiter, 0, 1});
    o.check(p.messages.back().content.find("{alpha} {{beta}} {{gamma}}") != std::string::npos, "delimiter rule");
  }
  // A word split into two tokens takes their mean.
  {
    const std::string text = "New-York rocks";
    std::vector<std::string> tokens = {"New", "-", "York", "rocks"};
    std::vector<text::Span> offsets = {{0, 3}, {3, 4}, {4, 8}, {9, 14}};
    auto trace = ActivationTrace::make(0, tokens, {2.0, 0.0, 4.0, 1.0}, offsets);
    auto words = word_activations(text, trace);
    o.check(words.size() == 2 && words[0] == 2.0 && words[1] == 1.0, "word averaging");
  }
  auto samples = prompt_samples();
  std::size_t matched = 0;
  for (const auto& c : prompt_cases()) {
    const auto rendered = render_prompt(samples.texts, samples.traces, c.spec).full_text();
    const auto frozen = golden(prompt_fixture(c.name), rendered);
    const bool ok = !frozen.empty() && frozen == rendered;
    matched += ok;
    o.check(ok, c.name + " fixture");
  }
  o.note("delimiter rule, word averaging, " + std::to_string(matched) + "/" + std::to_string(prompt_cases().size()) +
         " fixtures byte-identical");
  return o;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("feateval-acceptance-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::vector<std::string> argv = {"feateval"};
  argv.insert(argv.end(), args.begin(), args.end());
  std::ostringstream o, e;
  const int rc = cli::run_cli(argv, o, e);
  if (out) *out = o.str() + e.str();
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// plant -> preprocess -> describe --import -> evaluate in `dir`.
int demo_run(const fs::path& dir, const std::string& workers, std::string* log) {
  if (int rc = cli({"plant", "--out", dir.string(), "--seed", "7"}, log)) return rc;
  const auto config = (dir / "config.json").string();
  const auto descriptions = (dir / "descriptions.jsonl").string();
  if (int rc = cli({"--config", config, "preprocess"}, log)) return rc;
  if (int rc = cli({"--config", config, "describe", "--import", descriptions}, log)) return rc;
  const int rc = cli({"--config", config, "--workers", workers, "evaluate"}, log);
  return rc == cli::kPartialFailure ? 0 : rc;  // the gated demo feature is complete, others may not be
}

Outcome determinism() {
  Outcome o;
  TempDir a("det-a"), b("det-b");
  std::string log;
  o.check(demo_run(a.path, "1", &log) == 0, "first run: " + log);
  o.check(demo_run(b.path, "3", &log) == 0, "second run: " + log);
  const auto ra = slurp(a.path / "run" / "reports.jsonl");
  const auto rb = slurp(b.path / "run" / "reports.jsonl");
  o.check(!ra.empty(), "reports written");
  o.check(ra == rb, "reports.jsonl byte-identical");
  o.note("two runs (1 and 3 workers), reports.jsonl " + std::to_string(ra.size()) + " bytes, " +
         (ra == rb ? "identical" : "different"));
  return o;
}

Outcome baselines() {
  Outcome o;
  // TF-IDF: corpus {the cat sat, the dog sat, the cat ran}; a feature on "ran"
  // (1.0) and "cat" (0.5) puts sentences 2 and 0 in the foreground.
  // tf: the 2, cat 2, ran 1, sat 1.  df: the 3, cat 2, ran 1, sat 2.
  // scores: ran ln3 = 1.0986, cat 2 ln1.5 = 0.8109, sat ln1.5 = 0.4055, the 0.
  {
    auto corpus = Corpus::from_sentences({{0, "the cat sat", ""}, {1, "the dog sat", ""}, {2, "the cat ran", ""}});
    PlantedModel m;
    PlantedFeature f;
    f.lexicon = {{"ran", 1.0}, {"cat", 0.5}};
    m.features = {f};
    SyntheticProvider provider(m);
    auto d = tfidf_describe(provider, provider.handle(0), corpus, 2, 10);
    o.check(d.text == "ran cat sat", "tfidf text '" + d.text + "'");
    std::vector<std::string> fg = {"the cat ran", "the cat sat"};
    auto terms = tfidf_terms(fg, corpus);
    o.check(terms.size() == 3 && std::fabs(terms[0].score - std::log(3.0)) < 1e-12 &&
                std::fabs(terms[1].score - 2 * std::log(1.5)) < 1e-12 &&
                std::fabs(terms[2].score - std::log(1.5)) < 1e-12,
            "tfidf scores");
  }
  // Unembedding: W_U = [[1,0,2,0,1],[0,1,1,3,0]], decoder [0.5, 2]
  // -> [0.5, 2, 3, 6, 0.5]; top 4 with the 0.5 tie to the lower index.
  {
    PlantedModel m;
    m.vocab = {"w0", "w1", "w2", "w3", "w4"};
    m.unembedding = {{1, 0, 2, 0, 1}, {0, 1, 1, 3, 0}};
    PlantedFeature f;
    f.decoder = {0.5, 2.0};
    m.features = {f};
    SyntheticProvider provider(m);
    auto v = provider.logit_weights(provider.handle(0));
    o.check(v.weights == std::vector<double>({0.5, 2.0, 3.0, 6.0, 0.5}), "logit weights");
    auto d = unembedding_describe(provider, provider.handle(0), 4);
    o.check(d.text == "w3, w2, w1, w0", "unembedding text '" + d.text + "'");
  }
  // Both methods through describe and evaluate on the demo world.
  for (const std::string method : {"tfidf", "unembedding"}) {
    TempDir dir(method);
    std::string log;
    o.check(cli({"plant", "--out", dir.path.string(), "--seed", "7"}, &log) == 0, "plant");
    const auto config = (dir.path / "config.json").string();
    o.check(cli({"--config", config, "preprocess"}, &log) == 0, "preprocess");
    const int described = cli({"--config", config, "describe", "--method", method}, &log);
    o.check(described == 0, method + " describe: " + log);
    const int rc = cli({"--config", config, "evaluate"}, &log);
    o.check(rc == 0 || rc == cli::kPartialFailure, method + " evaluate rc " + std::to_string(rc) + ": " + log);
    std::size_t reports = 0, with_errors = 0;
    std::ifstream in(dir.path / "run" / "reports.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      auto r = EvaluationReport::from_json(nlohmann::json::parse(line));
      ++reports;
      with_errors += !r.errors.empty() || !r.clarity.present();
      if (reports == 1) o.note(method + " '" + r.description + "' clarity " + num(r.clarity.value.value_or(-1)));
    }
    o.check(reports == 3, method + " reports " + std::to_string(reports));
    o.check(with_errors == 0, method + " reports with stage errors " + std::to_string(with_errors));
  }
  return o;
}

}  // namespace

int main() {
  Shared shared;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"metric oracle equivalence", metric_oracles},
      {"faithfulness unit battery", faithfulness_battery},
      {"planted monosemantic end-to-end", [&] { return monosemantic(shared); }},
      {"planted polysemantic dissociation", [&] { return polysemantic(shared); }},
      {"near-miss description dissociation", [&] { return near_miss(shared); }},
      {"gate enforcement", [&] { return gate(shared); }},
      {"faithfulness seeded-oracle equality", [&] { return faithfulness_replay(shared); }},
      {"prompt rendering golden tests", prompt_goldens},
      {"determinism", determinism},
      {"baselines", baselines},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail += std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}

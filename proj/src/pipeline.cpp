#include "feateval/pipeline.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <numeric>
#include <set>

#include "feateval/error.hpp"
#include "feateval/kernels.hpp"
#include "feateval/random.hpp"

namespace feateval {

using nlohmann::json;

// ---------------------------------------------------------------------------
// config

void EvaluationConfig::validate() const {
  if (n_synth_requests == 0) throw ConfigError("n_synth_requests", "must be at least 1");
  if (n_rated_samples == 0) throw ConfigError("n_rated_samples", "must be at least 1");
  if (n_top_stratum > n_rated_samples) throw ConfigError("n_top_stratum", "exceeds n_rated_samples");
  if (rating_batch_size == 0) throw ConfigError("rating_batch_size", "must be at least 1");
  if (percentile_strata.empty()) throw ConfigError("percentile_strata", "must not be empty");
  double expect = 0.0;
  for (std::size_t i = 0; i < percentile_strata.size(); ++i) {
    const auto [lo, hi] = percentile_strata[i];
    if (lo != expect) {
      throw ConfigError("percentile_strata", "range " + std::to_string(i) + " must start at " + std::to_string(expect) +
                                                 " (ranges must cover [0, 100] without gaps or overlap)");
    }
    if (!(hi > lo)) throw ConfigError("percentile_strata", "range " + std::to_string(i) + " is empty");
    expect = hi;
  }
  if (expect != 100.0) throw ConfigError("percentile_strata", "ranges must end at 100");
  if (!(faithfulness_gate_threshold >= 0.0 && faithfulness_gate_threshold <= 1.0)) {
    throw ConfigError("faithfulness_gate_threshold", "must lie in [0, 1]");
  }
  if (std::count(steering_factors.begin(), steering_factors.end(), 0.0) != 1) {
    throw ConfigError("steering_factors", "must contain 0 exactly once");
  }
  if (n_steering_prompts == 0) throw ConfigError("n_steering_prompts", "must be at least 1");
  if (steering_max_new_tokens == 0) throw ConfigError("steering_max_new_tokens", "must be at least 1");
}

json EvaluationConfig::to_json() const {
  json strata = json::array();
  for (auto [lo, hi] : percentile_strata) strata.push_back({lo, hi});
  return {
      {"n_synth_requests", n_synth_requests},
      {"n_rated_samples", n_rated_samples},
      {"n_top_stratum", n_top_stratum},
      {"percentile_strata", strata},
      {"rating_batch_size", rating_batch_size},
      {"min_concept_samples", min_concept_samples},
      {"faithfulness_gate_threshold", faithfulness_gate_threshold},
      {"steering_factors", steering_factors},
      {"n_steering_prompts", n_steering_prompts},
      {"steering_max_new_tokens", steering_max_new_tokens},
      {"clarity_control_count", clarity_control_count},
      {"seed", seed},
  };
}

EvaluationConfig EvaluationConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("evaluation", "must be an object");
  EvaluationConfig c;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception&) {
      throw ConfigError(key, "has the wrong type");
    }
  };
  static const std::set<std::string> known = {
      "n_synth_requests", "n_rated_samples",        "n_top_stratum",      "percentile_strata",
      "rating_batch_size", "min_concept_samples",   "faithfulness_gate_threshold", "steering_factors",
      "n_steering_prompts", "steering_max_new_tokens", "clarity_control_count", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError(it.key(), "unknown evaluation setting");
  }
  get("n_synth_requests", c.n_synth_requests);
  get("n_rated_samples", c.n_rated_samples);
  get("n_top_stratum", c.n_top_stratum);
  if (j.contains("percentile_strata")) {
    c.percentile_strata.clear();
    const auto& s = j["percentile_strata"];
    if (!s.is_array()) throw ConfigError("percentile_strata", "must be a list of [lo, hi] pairs");
    for (const auto& r : s) {
      if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number()) {
        throw ConfigError("percentile_strata", "must be a list of [lo, hi] pairs");
      }
      c.percentile_strata.emplace_back(r[0].get<double>(), r[1].get<double>());
    }
  }
  get("rating_batch_size", c.rating_batch_size);
  get("min_concept_samples", c.min_concept_samples);
  get("faithfulness_gate_threshold", c.faithfulness_gate_threshold);
  get("steering_factors", c.steering_factors);
  get("n_steering_prompts", c.n_steering_prompts);
  get("steering_max_new_tokens", c.steering_max_new_tokens);
  get("clarity_control_count", c.clarity_control_count);
  get("seed", c.seed);
  c.validate();
  return c;
}

std::string EvaluationConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json().dump())));
  return buf;
}

std::uint64_t feature_seed(std::uint64_t run_seed, const FeatureHandle& feature) {
  return derive_seed(run_seed, feature.key());
}

// ---------------------------------------------------------------------------
// strata

std::vector<std::size_t> stratum_quotas(std::size_t total, std::size_t n_strata) {
  std::vector<std::size_t> q(n_strata);
  for (std::size_t j = 0; j < n_strata; ++j) q[j] = total * (j + 1) / n_strata - total * j / n_strata;
  return q;
}

StrataSample sample_strata(std::span<const double> abs_aggregates, const EvaluationConfig& config, std::uint64_t seed,
                           const std::unordered_set<std::uint64_t>& exclude) {
  const std::size_t n = abs_aggregates.size();
  StrataSample out;
  std::vector<char> taken(n, 0);
  for (auto id : exclude) {
    if (id < n) taken[id] = 1;
  }

  // Top stratum: highest aggregates, ties to the lower id.
  std::vector<std::uint64_t> order;
  order.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!taken[i]) order.push_back(i);
  }
  const std::size_t n_top = std::min(config.n_top_stratum, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_top), order.end(),
                    [&](std::uint64_t a, std::uint64_t b) {
                      return abs_aggregates[a] != abs_aggregates[b] ? abs_aggregates[a] > abs_aggregates[b] : a < b;
                    });
  for (std::size_t i = 0; i < n_top; ++i) {
    out.ids.push_back(order[i]);
    taken[order[i]] = 1;
  }
  out.top = n_top;

  // Percentile positions over the whole corpus.
  const std::uint64_t tie_seed = derive_seed(seed, "strata-ties");
  std::vector<std::uint64_t> rank(n);
  std::iota(rank.begin(), rank.end(), 0);
  std::sort(rank.begin(), rank.end(), [&](std::uint64_t a, std::uint64_t b) {
    if (abs_aggregates[a] != abs_aggregates[b]) return abs_aggregates[a] < abs_aggregates[b];
    auto ha = derive_seed(tie_seed, a), hb = derive_seed(tie_seed, b);
    return ha != hb ? ha < hb : a < b;
  });
  if (n > 0) {
    auto [mn, mx] = std::minmax_element(abs_aggregates.begin(), abs_aggregates.end());
    out.degenerate = *mn == *mx;
  }

  const std::size_t s = config.percentile_strata.size();
  std::vector<std::vector<std::uint64_t>> candidates(s);
  for (std::size_t j = 0; j < s; ++j) {
    const auto [lo, hi] = config.percentile_strata[j];
    auto begin = static_cast<std::size_t>(std::ceil(lo * static_cast<double>(n) / 100.0));
    auto end = j + 1 == s ? n : static_cast<std::size_t>(std::ceil(hi * static_cast<double>(n) / 100.0));
    end = std::min(end, n);
    for (std::size_t p = begin; p < end; ++p) {
      if (!taken[rank[p]]) candidates[j].push_back(rank[p]);
    }
  }

  const std::size_t remaining = config.n_rated_samples - std::min(config.n_rated_samples, n_top);
  auto quota = stratum_quotas(remaining, s);
  std::vector<std::size_t> take(s);
  for (std::size_t j = 0; j < s; ++j) take[j] = std::min(quota[j], candidates[j].size());
  for (std::size_t j = 0; j < s; ++j) {
    std::size_t deficit = quota[j] - take[j];
    if (deficit == 0) continue;
    out.shortfall += deficit;
    auto absorb = [&](std::size_t k) {
      const std::size_t room = candidates[k].size() - take[k];
      const std::size_t add = std::min(room, deficit);
      take[k] += add;
      deficit -= add;
    };
    for (std::size_t k = j; k-- > 0 && deficit;) absorb(k);
    for (std::size_t k = j + 1; k < s && deficit; ++k) absorb(k);
  }

  out.per_stratum.resize(s);
  for (std::size_t j = 0; j < s; ++j) {
    Rng rng(derive_seed(seed, "stratum-" + std::to_string(j)));
    for (auto pick : sample_without_replacement(rng, candidates[j].size(), take[j])) {
      out.ids.push_back(candidates[j][pick]);
    }
    out.per_stratum[j] = take[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// report

bool EvaluationReport::complete() const {
  return errors.empty() && clarity.present() && responsiveness.present() && purity.present() &&
         faithfulness.present();
}

namespace {

json metric_json(const MetricValue& m) { return m.value ? json(*m.value) : json(nullptr); }

MetricValue metric_from(const json& metrics, const json& reasons, const char* key) {
  if (metrics.contains(key) && metrics[key].is_number()) return MetricValue::of(metrics[key].get<double>());
  return MetricValue::absent(reasons.value(key, std::string("missing")));
}

}  // namespace

json EvaluationReport::to_json() const {
  json reasons = json::object();
  for (auto [name, m] : {std::pair{"clarity", &clarity}, std::pair{"responsiveness", &responsiveness},
                         std::pair{"purity", &purity}, std::pair{"faithfulness", &faithfulness}}) {
    if (!m->present()) reasons[name] = m->absent_reason;
  }
  json errs = json::array();
  for (const auto& e : errors) errs.push_back({{"stage", e.stage}, {"code", e.code}, {"message", e.message}});
  return {
      {"feature", feature.key()},
      {"description", description},
      {"description_method", description_method},
      {"metrics",
       {{"clarity", metric_json(clarity)},
        {"responsiveness", metric_json(responsiveness)},
        {"purity", metric_json(purity)},
        {"faithfulness", metric_json(faithfulness)}}},
      {"absent_reasons", reasons},
      {"gate_passed", gate_passed},
      {"steering", {{"factors", steering_factors}, {"proportions", steering_proportions}}},
      {"counts",
       {{"synthetic_requests", counts.synthetic_requests},
        {"synthetic_failed_requests", counts.synthetic_failed_requests},
        {"synthetic_kept", counts.synthetic_kept},
        {"synthetic_duplicates", counts.synthetic_duplicates},
        {"control_samples", counts.control_samples},
        {"rating_rounds", counts.rating_rounds},
        {"rated_sent", counts.rated_sent},
        {"rated", counts.rated},
        {"rating_2", counts.rating_2},
        {"rating_1", counts.rating_1},
        {"rating_0", counts.rating_0},
        {"dropped", counts.dropped},
        {"strata_shortfall", counts.strata_shortfall},
        {"steering_prompts", counts.steering_prompts},
        {"steering_rated", counts.steering_rated},
        {"steering_dropped", counts.steering_dropped}}},
      {"usage",
       {{"judge", judge_usage.to_json()},
        {"provider",
         {{"activation_calls", provider_usage.activation_calls},
          {"activation_texts", provider_usage.activation_texts},
          {"generate_calls", provider_usage.generate_calls},
          {"logit_calls", provider_usage.logit_calls}}}}},
      {"errors", errs},
      {"warnings", warnings},
      {"provenance",
       {{"judge_model", judge_model},
        {"provider_id", provider_id},
        {"config_hash", config_hash},
        {"run_seed", run_seed},
        {"seed", seed},
        {"judge_temperature", judge_temperature ? json(*judge_temperature) : json("service-default")}}},
  };
}

EvaluationReport EvaluationReport::from_json(const json& j) {
  EvaluationReport r;
  r.feature = FeatureHandle::parse(j.at("feature").get<std::string>());
  r.description = j.value("description", std::string());
  r.description_method = j.value("description_method", std::string("external"));
  const json empty = json::object();
  const auto& m = j.contains("metrics") ? j["metrics"] : empty;
  const auto& reasons = j.contains("absent_reasons") ? j["absent_reasons"] : empty;
  r.clarity = metric_from(m, reasons, "clarity");
  r.responsiveness = metric_from(m, reasons, "responsiveness");
  r.purity = metric_from(m, reasons, "purity");
  r.faithfulness = metric_from(m, reasons, "faithfulness");
  r.gate_passed = j.value("gate_passed", false);
  if (j.contains("steering")) {
    r.steering_factors = j["steering"].value("factors", std::vector<double>{});
    r.steering_proportions = j["steering"].value("proportions", std::vector<double>{});
  }
  if (j.contains("counts")) {
    const auto& c = j["counts"];
    auto get = [&](const char* k, std::size_t& f) { f = c.value(k, std::size_t{0}); };
    get("synthetic_requests", r.counts.synthetic_requests);
    get("synthetic_failed_requests", r.counts.synthetic_failed_requests);
    get("synthetic_kept", r.counts.synthetic_kept);
    get("synthetic_duplicates", r.counts.synthetic_duplicates);
    get("control_samples", r.counts.control_samples);
    get("rating_rounds", r.counts.rating_rounds);
    get("rated_sent", r.counts.rated_sent);
    get("rated", r.counts.rated);
    get("rating_2", r.counts.rating_2);
    get("rating_1", r.counts.rating_1);
    get("rating_0", r.counts.rating_0);
    get("dropped", r.counts.dropped);
    get("strata_shortfall", r.counts.strata_shortfall);
    get("steering_prompts", r.counts.steering_prompts);
    get("steering_rated", r.counts.steering_rated);
    get("steering_dropped", r.counts.steering_dropped);
  }
  if (j.contains("usage")) {
    const auto& u = j["usage"];
    if (u.contains("judge")) {
      for (std::size_t i = 0; i < kJudgePurposes; ++i) {
        auto name = std::string(judge_purpose_name(static_cast<JudgePurpose>(i)));
        if (!u["judge"].contains(name)) continue;
        const auto& p = u["judge"][name];
        r.judge_usage.calls[i] = p.value("calls", std::uint64_t{0});
        r.judge_usage.failed_calls[i] = p.value("failed_calls", std::uint64_t{0});
        r.judge_usage.prompt_tokens[i] = p.value("prompt_tokens", std::uint64_t{0});
        r.judge_usage.completion_tokens[i] = p.value("completion_tokens", std::uint64_t{0});
      }
    }
    if (u.contains("provider")) {
      const auto& p = u["provider"];
      r.provider_usage.activation_calls = p.value("activation_calls", std::uint64_t{0});
      r.provider_usage.activation_texts = p.value("activation_texts", std::uint64_t{0});
      r.provider_usage.generate_calls = p.value("generate_calls", std::uint64_t{0});
      r.provider_usage.logit_calls = p.value("logit_calls", std::uint64_t{0});
    }
  }
  if (j.contains("errors")) {
    for (const auto& e : j["errors"]) {
      r.errors.push_back({e.value("stage", ""), e.value("code", ""), e.value("message", "")});
    }
  }
  r.warnings = j.value("warnings", std::vector<std::string>{});
  if (j.contains("provenance")) {
    const auto& p = j["provenance"];
    r.judge_model = p.value("judge_model", "");
    r.provider_id = p.value("provider_id", "");
    r.config_hash = p.value("config_hash", "");
    r.run_seed = p.value("run_seed", std::uint64_t{0});
    r.seed = p.value("seed", std::uint64_t{0});
    if (p.contains("judge_temperature") && p["judge_temperature"].is_number()) {
      r.judge_temperature = p["judge_temperature"].get<double>();
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// stages

namespace {

std::vector<double> signed_max_of(Provider& provider, const FeatureHandle& feature,
                                  const std::vector<std::string>& texts) {
  std::vector<double> out;
  out.reserve(texts.size());
  for (std::size_t lo = 0; lo < texts.size(); lo += kDefaultScanBatch) {
    std::vector<Sentence> batch;
    for (std::size_t i = lo; i < std::min(texts.size(), lo + kDefaultScanBatch); ++i) {
      batch.push_back({static_cast<std::uint64_t>(i), texts[i], "synthetic"});
    }
    for (const auto& t : provider.activations(feature, batch)) out.push_back(t.signed_max);
  }
  return out;
}

}  // namespace

ClarityResult eval_clarity(Provider& provider, JudgeClient& judge, const FeatureHandle& feature,
                           const std::string& description, std::span<const TraceAggregate> aggregates,
                           const Corpus& corpus, const EvaluationConfig& config, std::uint64_t fseed,
                           EvaluationCounts& counts) {
  ClarityResult out;
  auto batch = judge.generate_synthetic(description, config.n_synth_requests, derive_seed(fseed, "synthetic"));
  counts.synthetic_requests = batch.requests;
  counts.synthetic_failed_requests = batch.failed_requests;
  counts.synthetic_kept = batch.samples.size();
  counts.synthetic_duplicates = batch.duplicates_removed;
  if (batch.samples.size() < 2) {
    out.clarity = MetricValue::absent("ClarityUndefined: " + std::to_string(batch.samples.size()) +
                                      " usable synthetic samples");
    return out;
  }
  out.sets.concept_samples = signed_max_of(provider, feature, batch.samples);

  if (config.clarity_control_count == 0 || config.clarity_control_count >= corpus.size()) {
    out.sets.non_concept_samples.reserve(aggregates.size());
    for (const auto& a : aggregates) out.sets.non_concept_samples.push_back(a.signed_max);
  } else {
    for (auto id : sample_uniform_ids(corpus, config.clarity_control_count, derive_seed(fseed, "control"))) {
      out.sets.non_concept_samples.push_back(aggregates[id].signed_max);
    }
  }
  counts.control_samples = out.sets.non_concept_samples.size();
  out.clarity = MetricValue::of(metrics::gini_abs(out.sets));
  return out;
}

RatedSetResult eval_responsiveness_purity(JudgeClient& judge, const std::string& description,
                                          std::span<const TraceAggregate> aggregates, const Corpus& corpus,
                                          const EvaluationConfig& config, std::uint64_t fseed,
                                          EvaluationCounts& counts, std::vector<std::string>& warnings) {
  RatedSetResult out;
  std::vector<double> abs_agg;
  abs_agg.reserve(aggregates.size());
  for (const auto& a : aggregates) abs_agg.push_back(a.abs_max);

  std::unordered_set<std::uint64_t> rated_ids;
  for (int round = 0; round < 2; ++round) {
    const std::uint64_t round_seed = derive_seed(fseed, "rating-round-" + std::to_string(round));
    auto strata = sample_strata(abs_agg, config, round_seed, rated_ids);
    if (strata.ids.empty()) break;
    counts.strata_shortfall += strata.shortfall;
    if (strata.degenerate && round == 0) warnings.push_back("all aggregates equal; strata degenerate to a uniform draw");
    if (strata.shortfall) {
      warnings.push_back("round " + std::to_string(round + 1) + ": " + std::to_string(strata.shortfall) +
                         " samples filled from neighbouring strata");
    }

    auto sentences = corpus.gather(strata.ids);
    std::vector<RatingItem> items;
    items.reserve(sentences.size());
    for (const auto& s : sentences) items.push_back({std::to_string(s.id), s.text});
    auto result = judge.rate(description, items, config.rating_batch_size, derive_seed(round_seed, "judge"));

    ++counts.rating_rounds;
    counts.rated_sent += items.size();
    counts.rated += result.ratings.size();
    counts.dropped += result.dropped;
    for (auto id : strata.ids) rated_ids.insert(id);
    for (const auto& r : result.ratings) {
      const auto id = std::stoull(r.sample_id);
      if (r.rating == 2) {
        ++counts.rating_2;
        out.sets.concept_samples.push_back(aggregates[id].signed_max);
      } else if (r.rating == 1) {
        ++counts.rating_1;
      } else {
        ++counts.rating_0;
        out.sets.non_concept_samples.push_back(aggregates[id].signed_max);
      }
      out.ratings.push_back(r);
    }
    if (out.sets.concept_samples.size() >= config.min_concept_samples) break;
  }

  if (out.sets.concept_samples.empty()) {
    out.responsiveness = MetricValue::absent("ConceptStarved: no sample rated 2 after resampling");
    out.purity = out.responsiveness;
    return out;
  }
  if (out.sets.non_concept_samples.empty()) {
    out.responsiveness = MetricValue::absent("EmptySampleSet: no sample rated 0");
  } else {
    out.responsiveness = MetricValue::of(metrics::gini_abs(out.sets));
  }
  out.purity = MetricValue::of(metrics::average_precision(out.sets).value);
  return out;
}

FaithfulnessResult eval_faithfulness(Provider& provider, JudgeClient& judge, const FeatureHandle& feature,
                                     const std::string& description, const MetricValue& clarity,
                                     const MetricValue& responsiveness, const Corpus& corpus,
                                     const EvaluationConfig& config, std::uint64_t fseed, EvaluationCounts& counts) {
  FaithfulnessResult out;
  out.gate_passed = clarity.present() && responsiveness.present() &&
                    std::min(*clarity.value, *responsiveness.value) >= config.faithfulness_gate_threshold;
  if (!out.gate_passed) {
    out.faithfulness = MetricValue::of(0.0);
    return out;
  }
  if (!provider.capabilities().steering) {
    out.faithfulness = MetricValue::absent("SteeringUnsupported: provider cannot steer");
    return out;
  }

  // One prompt draw shared by every factor so proportions differ only by the intervention.
  auto prompts = sample_uniform(corpus, config.n_steering_prompts, derive_seed(fseed, "steering-prompts"));
  counts.steering_prompts = prompts.size();
  const std::uint64_t steer_seed = derive_seed(fseed, "steering");
  for (std::size_t j = 0; j < config.steering_factors.size(); ++j) {
    SteeringSpec spec{feature, config.steering_factors[j], config.steering_max_new_tokens};
    auto continuations = provider.generate_steered(prompts, spec, derive_seed(steer_seed, j));
    std::vector<RatingItem> items;
    for (std::size_t i = 0; i < continuations.size(); ++i) items.push_back({std::to_string(i), continuations[i]});
    auto rated = judge.rate(description, items, config.rating_batch_size,
                            derive_seed(derive_seed(steer_seed, "judge"), j), JudgePurpose::kSteeringRating);
    std::size_t concept_outputs = 0;
    for (const auto& r : rated.ratings) concept_outputs += r.rating == 2;
    counts.steering_rated += rated.ratings.size();
    counts.steering_dropped += rated.dropped;
    out.proportions.push_back(static_cast<double>(concept_outputs) / static_cast<double>(rated.ratings.size()));
  }
  metrics::SteeringProfile profile(config.steering_factors, out.proportions);
  out.faithfulness = MetricValue::of(metrics::faithfulness(profile));
  return out;
}

// ---------------------------------------------------------------------------
// orchestration

namespace {

void record(EvaluationReport& report, const char* stage, const Error& e) {
  report.errors.push_back({stage, std::string(error_code_name(e.code())), e.detail()});
}

MetricValue absent_from(const Error& e) {
  return MetricValue::absent(e.what());
}

}  // namespace

EvaluationReport evaluate(const Description& description, const EvaluationConfig& config, EvaluationContext& ctx) {
  config.validate();
  EvaluationReport report;
  report.feature = description.feature;
  report.description = description.text;
  report.description_method = std::string(description_method_name(description.method));
  report.config_hash = config.hash();
  report.run_seed = config.seed;
  report.seed = feature_seed(config.seed, description.feature);
  report.judge_temperature = ctx.judge_options.temperature;
  report.steering_factors = config.steering_factors;

  CountingProvider provider(ctx.provider);
  JudgeClient judge(ctx.judge, ctx.judge_options);
  report.judge_model = judge.model_id();
  report.provider_id = provider.id();
  const std::uint64_t fseed = report.seed;
  FeatureHandle feature = description.feature;

  auto finish = [&]() {
    report.judge_usage = judge.usage();
    report.provider_usage = {provider.activation_calls(), provider.activation_texts(), provider.generate_calls(),
                             provider.logit_calls()};
    return report;
  };

  const auto missing = [](const char* why) { return MetricValue::absent(why); };
  report.clarity = report.responsiveness = report.purity = report.faithfulness = missing("not evaluated");

  if (description.text == kNoConceptFound) {
    report.errors.push_back({"describe", "DescribeFailure", "description is the no-concept sentinel"});
    report.clarity = report.responsiveness = report.purity = report.faithfulness = missing("no description");
    return finish();
  }

  std::vector<TraceAggregate> aggregates;
  try {
    std::optional<std::vector<TraceAggregate>> cached;
    if (ctx.cached_aggregates) cached = ctx.cached_aggregates(feature);
    if (cached && cached->size() == ctx.corpus.size()) {
      aggregates = std::move(*cached);
    } else {
      aggregates = scan_aggregates(provider, feature, ctx.corpus);
    }
  } catch (const Error& e) {
    record(report, "scan", e);
    report.clarity = report.responsiveness = report.purity = report.faithfulness = absent_from(e);
    return finish();
  }
  if (feature.kind == FeatureKind::kSaeLatent && !feature.max_observed_activation) {
    double mx = 0.0;
    for (const auto& a : aggregates) mx = std::max(mx, a.abs_max);
    feature.max_observed_activation = mx;
  }

  try {
    report.clarity =
        eval_clarity(provider, judge, feature, description.text, aggregates, ctx.corpus, config, fseed, report.counts)
            .clarity;
  } catch (const Error& e) {
    record(report, "clarity", e);
    report.clarity = absent_from(e);
  }

  try {
    auto rated = eval_responsiveness_purity(judge, description.text, aggregates, ctx.corpus, config, fseed,
                                            report.counts, report.warnings);
    report.responsiveness = rated.responsiveness;
    report.purity = rated.purity;
  } catch (const Error& e) {
    record(report, "responsiveness_purity", e);
    report.responsiveness = report.purity = absent_from(e);
  }

  try {
    auto f = eval_faithfulness(provider, judge, feature, description.text, report.clarity, report.responsiveness,
                               ctx.corpus, config, fseed, report.counts);
    report.gate_passed = f.gate_passed;
    report.faithfulness = f.faithfulness;
    report.steering_proportions = f.proportions;
  } catch (const Error& e) {
    record(report, "faithfulness", e);
    report.gate_passed = true;
    report.faithfulness = absent_from(e);
  }
  return finish();
}

std::vector<EvaluationReport> evaluate_all(std::span<const Description> descriptions, const EvaluationConfig& config,
                                           EvaluationContext& ctx, std::size_t workers,
                                           const std::function<void(const EvaluationReport&)>& on_done) {
  config.validate();
  std::vector<EvaluationReport> out(descriptions.size());
  std::exception_ptr callback_error;
  const int threads = static_cast<int>(std::max<std::size_t>(1, std::min(workers, descriptions.size())));
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(descriptions.size()); ++i) {
    const auto& d = descriptions[static_cast<std::size_t>(i)];
    EvaluationReport report;
    try {
      report = evaluate(d, config, ctx);
    } catch (const std::exception& e) {
      report.feature = d.feature;
      report.description = d.text;
      report.config_hash = config.hash();
      report.run_seed = config.seed;
      report.seed = feature_seed(config.seed, d.feature);
      report.clarity = report.responsiveness = report.purity = report.faithfulness = MetricValue::absent(e.what());
      report.errors.push_back({"evaluate", "Internal", e.what()});
    }
#pragma omp critical(feateval_evaluate_done)
    {
      if (on_done && !callback_error) {
        try {
          on_done(report);
        } catch (...) {
          callback_error = std::current_exception();
        }
      }
    }
    out[static_cast<std::size_t>(i)] = std::move(report);
  }
  if (callback_error) std::rethrow_exception(callback_error);
  return out;
}

}  // namespace feateval

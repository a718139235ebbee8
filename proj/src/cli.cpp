#include "feateval/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "feateval/error.hpp"
#include "feateval/kernels.hpp"
#include "feateval/random.hpp"
#include "feateval/remote_provider.hpp"
#include "feateval/replay_provider.hpp"
#include "feateval/report.hpp"
#include "feateval/synthetic_provider.hpp"

namespace feateval::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::vector<MockConcept> registry_from_json(const json& j) {
  std::vector<MockConcept> out;
  for (const auto& e : j) {
    MockConcept c;
    c.description = e.at("description").get<std::string>();
    c.lexicon = e.value("lexicon", std::vector<std::string>{});
    c.near_miss = e.value("near_miss", std::vector<std::string>{});
    out.push_back(std::move(c));
  }
  return out;
}

json registry_to_json(const std::vector<MockConcept>& registry) {
  json out = json::array();
  for (const auto& c : registry) {
    out.push_back({{"description", c.description}, {"lexicon", c.lexicon}, {"near_miss", c.near_miss}});
  }
  return out;
}

ChatConfig chat_from_json(const json& j, const fs::path& base, const std::string& field) {
  ChatConfig c;
  if (!j.is_object()) throw ConfigError(field, "must be an object");
  try {
    c.kind = j.value("kind", c.kind);
    c.base_url = j.value("base_url", c.base_url);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    if (j.contains("temperature") && !j["temperature"].is_null()) c.temperature = j["temperature"].get<double>();
    c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
    c.samples_per_request = j.value("samples_per_request", c.samples_per_request);
    if (j.contains("registry")) {
      const auto& r = j["registry"];
      if (r.is_string()) {
        auto path = resolve(base, r.get<std::string>());
        std::ifstream in(path);
        if (!in) throw ConfigError(field + ".registry", "cannot read " + path.string());
        c.registry = registry_from_json(json::parse(in));
      } else {
        c.registry = registry_from_json(r);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(field, e.what());
  }
  if (c.kind != "mock" && c.kind != "openai") throw ConfigError(field + ".kind", "must be 'mock' or 'openai'");
  return c;
}

json chat_to_json(const ChatConfig& c) {
  json j = {{"kind", c.kind}};
  if (c.kind == "openai") {
    j["base_url"] = c.base_url;
    j["model"] = c.model;
    j["temperature"] = c.temperature ? json(*c.temperature) : json(nullptr);
  } else {
    j["registry"] = registry_to_json(c.registry);
    j["samples_per_request"] = c.samples_per_request;
  }
  return j;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const fs::path& base) {
  if (!j.is_object()) throw ConfigError("config", "must be a JSON object");
  static const std::set<std::string> known = {"corpus",   "provider", "judge",    "explainer", "describe",
                                              "evaluation", "features", "seed",   "workers",   "output"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError(it.key(), "unknown setting");
  }
  RunConfig c;
  try {
    if (j.contains("corpus")) {
      const auto& jc = j["corpus"];
      for (const auto& p : jc.value("inputs", std::vector<std::string>{})) c.corpus_inputs.push_back(resolve(base, p));
      if (jc.contains("dir")) c.corpus_dir = resolve(base, jc["dir"].get<std::string>());
      c.length_low_percentile = jc.value("length_low_percentile", c.length_low_percentile);
      c.length_high_percentile = jc.value("length_high_percentile", c.length_high_percentile);
    }
    if (j.contains("provider")) {
      const auto& jp = j["provider"];
      c.provider.kind = jp.value("kind", c.provider.kind);
      if (jp.contains("model")) c.provider.model = resolve(base, jp["model"].get<std::string>());
      if (jp.contains("dump")) c.provider.dump = resolve(base, jp["dump"].get<std::string>());
      c.provider.endpoint = jp.value("endpoint", std::string());
    }
    if (j.contains("judge")) c.judge = chat_from_json(j["judge"], base, "judge");
    c.explainer = j.contains("explainer") ? chat_from_json(j["explainer"], base, "explainer") : c.judge;
    if (j.contains("describe")) {
      const auto& jd = j["describe"];
      c.describe.method = jd.value("method", c.describe.method);
      auto mode = jd.value("mode", std::string("delimiter"));
      if (mode != "delimiter" && mode != "numeric") throw ConfigError("describe.mode", "must be 'delimiter' or 'numeric'");
      c.describe.prompt.mode = mode == "numeric" ? PromptMode::kNumeric : PromptMode::kDelimiter;
      c.describe.prompt.n_shots = jd.value("n_shots", c.describe.prompt.n_shots);
      c.describe.prompt.n_samples = jd.value("n_samples", c.describe.prompt.n_samples);
      c.describe.k_pool = jd.value("k_pool", c.describe.k_pool);
      c.describe.tfidf_samples = jd.value("tfidf_samples", c.describe.tfidf_samples);
      c.describe.top_k = jd.value("top_k", c.describe.top_k);
    }
    if (j.contains("features")) {
      const auto& jf = j["features"];
      if (jf.is_string()) {
        c.features = {jf.get<std::string>()};
      } else {
        c.features = jf.get<std::vector<std::string>>();
      }
    }
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    c.workers = j.value("workers", c.workers);
    if (j.contains("output")) c.out = resolve(base, j["output"].get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError("config", e.what());
  }
  if (j.contains("evaluation")) c.evaluation = EvaluationConfig::from_json(j["evaluation"]);
  return c;
}

json RunConfig::effective_json() const {
  json inputs = json::array();
  for (const auto& p : corpus_inputs) inputs.push_back(p.string());
  EvaluationConfig eval = evaluation;
  eval.seed = seed.value_or(0);
  return {
      {"corpus",
       {{"inputs", inputs},
        {"length_low_percentile", length_low_percentile},
        {"length_high_percentile", length_high_percentile}}},
      {"provider",
       {{"kind", provider.kind},
        {"model", provider.model.string()},
        {"dump", provider.dump.string()},
        {"endpoint", provider.endpoint}}},
      {"judge", chat_to_json(judge)},
      {"explainer", chat_to_json(explainer)},
      {"describe",
       {{"method", describe.method},
        {"mode", describe.prompt.mode == PromptMode::kNumeric ? "numeric" : "delimiter"},
        {"n_shots", describe.prompt.n_shots},
        {"n_samples", describe.prompt.n_samples},
        {"k_pool", describe.k_pool},
        {"tfidf_samples", describe.tfidf_samples},
        {"top_k", describe.top_k}}},
      {"evaluation", eval.to_json()},
      {"seed", seed ? json(*seed) : json(nullptr)},
  };
}

// Describe and explainer settings are left out: each description records its
// own method and prompt hash, so several methods can share one run directory.
std::string RunConfig::hash() const {
  auto j = effective_json();
  j.erase("describe");
  j.erase("explainer");
  return hex64(fnv1a64(j.dump()));
}

std::vector<std::string> expand_feature_keys(const std::vector<std::string>& keys) {
  std::vector<std::string> out;
  for (const auto& raw : keys) {
    std::stringstream ss(raw);
    std::string key;
    while (std::getline(ss, key, ',')) {
      key = std::string(text::trim(key));
      if (key.empty()) continue;
      auto slash = key.rfind('/');
      auto dash = slash == std::string::npos ? std::string::npos : key.find('-', slash);
      if (dash == std::string::npos) {
        out.push_back(key);
        continue;
      }
      const std::string prefix = key.substr(0, slash + 1);
      std::uint64_t lo = 0, hi = 0;
      try {
        lo = std::stoull(key.substr(slash + 1, dash - slash - 1));
        hi = std::stoull(key.substr(dash + 1));
      } catch (const std::exception&) {
        throw ConfigError("features", "bad range '" + key + "'");
      }
      if (hi < lo) throw ConfigError("features", "empty range '" + key + "'");
      for (auto i = lo; i <= hi; ++i) out.push_back(prefix + std::to_string(i));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// runtime

namespace {

struct Options {
  std::string config_path;
  std::string features;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  bool resume = false;
  std::string provider;
  std::string judge;
  std::string out;
  // describe
  std::string import_path;
  std::string method;
};

class Runner {
 public:
  Runner(RunConfig config, bool resume, std::ostream& out, std::ostream& err)
      : cfg_(std::move(config)), resume_(resume), out_(out), err_(err) {
    if (cfg_.corpus_dir.empty()) cfg_.corpus_dir = cfg_.out / "corpus";
  }

  int preprocess();
  int scan();
  int describe(const std::string& import_path);
  int evaluate();
  int summarize();
  int account();
  int plant();

 private:
  void log(const std::string& msg) { err_ << "[feateval] " << msg << "\n"; }
  void check_manifest();
  Provider& provider();
  std::unique_ptr<ChatBackend> make_chat(const ChatConfig& c) const;
  const Corpus& corpus();
  std::vector<FeatureHandle> features();
  std::uint64_t require_seed() const {
    if (!cfg_.seed) throw ConfigError("seed", "a seed is required (config 'seed' or --seed)");
    return *cfg_.seed;
  }
  std::map<std::string, json> read_jsonl(const fs::path& path) const;
  void write_sorted_jsonl(const fs::path& path, const std::map<std::string, json>& records) const;

  RunConfig cfg_;
  bool resume_;
  std::ostream& out_;
  std::ostream& err_;
  std::unique_ptr<Provider> provider_;
  std::optional<Corpus> corpus_;
};

void Runner::check_manifest() {
  fs::create_directories(cfg_.out);
  const auto path = cfg_.out / "manifest.json";
  const auto hash = cfg_.hash();
  if (fs::exists(path)) {
    std::ifstream in(path);
    json m = json::parse(in, nullptr, false);
    if (m.is_discarded() || !m.contains("config_hash")) throw ConfigError("out", "unreadable manifest " + path.string());
    if (m["config_hash"] != hash) {
      throw ConfigError("out", "directory holds artifacts of config " + m["config_hash"].get<std::string>() +
                                   ", current config is " + hash + "; use a fresh --out");
    }
    return;
  }
  json manifest = {
      {"config_hash", hash},
      {"config", cfg_.effective_json()},
      {"versions", {{"feateval", kVersion}, {"prompts", "v1"}, {"protocol", "1"}}},
  };
  std::ofstream(path) << manifest.dump(2) << "\n";
}

Provider& Runner::provider() {
  if (provider_) return *provider_;
  const auto& p = cfg_.provider;
  if (p.kind == "synthetic") {
    if (p.model.empty()) throw ConfigError("provider.model", "synthetic provider needs a planted model file");
    if (!fs::exists(p.model)) throw ConfigError("provider.model", "no such file " + p.model.string());
    provider_ = std::make_unique<SyntheticProvider>(PlantedModel::load(p.model));
  } else if (p.kind == "replay") {
    if (!fs::exists(p.dump)) throw ConfigError("provider.dump", "no such file " + p.dump.string());
    provider_ = std::make_unique<ReplayProvider>(ReplayProvider::load(p.dump));
  } else if (p.kind == "remote") {
    if (p.endpoint.empty()) throw ConfigError("provider.endpoint", "remote provider needs an endpoint");
    RemoteProviderOptions o;
    o.endpoint = p.endpoint;
    auto remote = std::make_unique<RemoteProvider>(o);
    remote->capabilities();  // health check; throws ProviderUnavailable
    provider_ = std::move(remote);
  } else {
    throw ConfigError("provider.kind", "must be synthetic, replay or remote");
  }
  return *provider_;
}

std::unique_ptr<ChatBackend> Runner::make_chat(const ChatConfig& c) const {
  if (c.kind == "mock") return std::make_unique<MockJudge>(c.registry, c.samples_per_request);
  OpenAiChatOptions o;
  o.base_url = c.base_url;
  o.model = c.model;
  o.api_key_env = c.api_key_env;
  o.temperature = c.temperature;
  if (!c.api_key_env.empty() && !std::getenv(c.api_key_env.c_str())) {
    throw ConfigError("judge.api_key_env", "environment variable " + c.api_key_env + " is not set");
  }
  return std::make_unique<OpenAiChatBackend>(o);
}

const Corpus& Runner::corpus() {
  if (!corpus_) {
    if (!fs::exists(cfg_.corpus_dir / "corpus.json")) {
      throw ConfigError("corpus", "no corpus at " + cfg_.corpus_dir.string() + "; run preprocess first");
    }
    corpus_ = Corpus::open(cfg_.corpus_dir);
  }
  return *corpus_;
}

std::vector<FeatureHandle> Runner::features() {
  auto& prov = provider();
  std::vector<std::string> keys = expand_feature_keys(cfg_.features);
  const bool all = keys.empty() || (keys.size() == 1 && keys[0] == "all");
  std::vector<FeatureHandle> out;
  if (auto* synth = dynamic_cast<SyntheticProvider*>(&prov)) {
    std::map<std::string, FeatureHandle> known;
    for (std::size_t i = 0; i < synth->model().features.size(); ++i) known.emplace(synth->handle(i).key(), synth->handle(i));
    if (all) {
      for (auto& [k, h] : known) out.push_back(h);
      return out;
    }
    for (const auto& k : keys) {
      auto h = FeatureHandle::parse(k);
      auto it = known.find(h.key());
      out.push_back(it == known.end() ? h : it->second);
    }
    return out;
  }
  if (auto* replay = dynamic_cast<ReplayProvider*>(&prov)) {
    if (all) keys = replay->feature_keys();
    for (const auto& k : keys) {
      auto h = FeatureHandle::parse(k);
      h.max_observed_activation = replay->max_observed_activation(h);
      out.push_back(h);
    }
    return out;
  }
  if (all) throw ConfigError("features", "a remote provider needs an explicit feature list");
  for (const auto& k : keys) out.push_back(FeatureHandle::parse(k));
  return out;
}

std::map<std::string, json> Runner::read_jsonl(const fs::path& path) const {
  std::map<std::string, json> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("feature")) continue;  // torn final line of an interrupted run
    auto key = FeatureHandle::parse(j["feature"].get<std::string>()).key();
    out[key] = std::move(j);
  }
  return out;
}

void Runner::write_sorted_jsonl(const fs::path& path, const std::map<std::string, json>& records) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    for (const auto& [k, j] : records) o << j.dump() << "\n";
    if (!o) throw Error(ErrorCode::kIoError, "cannot write " + tmp);
  }
  fs::rename(tmp, path);
}

int Runner::preprocess() {
  check_manifest();
  if (cfg_.corpus_inputs.empty()) throw ConfigError("corpus.inputs", "no input files");
  if (resume_ && fs::exists(cfg_.corpus_dir / "corpus.json")) {
    log("corpus already built at " + cfg_.corpus_dir.string());
    return kOk;
  }
  std::vector<RawDocument> docs;
  for (const auto& p : cfg_.corpus_inputs) {
    if (!fs::exists(p)) throw ConfigError("corpus.inputs", "no such file " + p.string());
    auto d = read_raw_documents(p);
    docs.insert(docs.end(), std::make_move_iterator(d.begin()), std::make_move_iterator(d.end()));
  }
  PreprocessConfig pc;
  pc.low_percentile = cfg_.length_low_percentile;
  pc.high_percentile = cfg_.length_high_percentile;
  auto result = feateval::preprocess(docs, pc);
  auto c = Corpus::from_sentences(std::move(result.sentences), result.stats);
  c.save(cfg_.corpus_dir);
  json summary = {{"n_sentences", result.stats.n_sentences},
                  {"n_tokens", result.stats.n_tokens},
                  {"length_bounds", {result.stats.length_low, result.stats.length_high}},
                  {"split", result.log.split},
                  {"dropped_length", result.log.dropped_length},
                  {"dropped_non_alphabetic", result.log.dropped_non_alphabetic},
                  {"dropped_duplicate", result.log.dropped_duplicate}};
  out_ << summary.dump(2) << "\n";
  return kOk;
}

int Runner::scan() {
  check_manifest();
  const auto path = cfg_.out / "scan.jsonl";
  auto done = resume_ ? read_jsonl(path) : std::map<std::string, json>{};
  auto& prov = provider();
  const auto& c = corpus();
  for (const auto& f : features()) {
    if (done.count(f.key())) continue;
    log("scanning " + f.key());
    auto agg = scan_aggregates(prov, f, c);
    json signed_max = json::array(), abs_max = json::array();
    for (const auto& a : agg) {
      signed_max.push_back(a.signed_max);
      abs_max.push_back(a.abs_max);
    }
    done[f.key()] = {{"feature", f.key()}, {"config_hash", cfg_.hash()}, {"signed_max", signed_max}, {"abs_max", abs_max}};
    write_sorted_jsonl(path, done);
  }
  write_sorted_jsonl(path, done);
  return kOk;
}

int Runner::describe(const std::string& import_path) {
  check_manifest();
  const auto path = cfg_.out / "descriptions.jsonl";
  auto done = resume_ ? read_jsonl(path) : std::map<std::string, json>{};

  if (!import_path.empty()) {
    std::ifstream in(import_path);
    if (!in) throw ConfigError("import", "cannot read " + import_path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      if (text::trim(line).empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) throw ConfigError("import", "line " + std::to_string(n + 1) + " is not JSON");
      auto d = Description::from_json(j);
      if (!j.contains("method")) d.method = DescriptionMethod::kExternal;
      d.provenance["imported_from"] = fs::path(import_path).filename().string();
      d.provenance["config_hash"] = cfg_.hash();
      done[d.feature.key()] = d.to_json();
      ++n;
    }
    write_sorted_jsonl(path, done);
    log("imported " + std::to_string(n) + " descriptions");
    return kOk;
  }

  const std::uint64_t seed = require_seed();
  auto& prov = provider();
  const auto& c = corpus();
  std::unique_ptr<ChatBackend> backend;
  std::unique_ptr<JudgeClient> explainer;
  const auto method = parse_description_method(cfg_.describe.method);
  if (method == DescriptionMethod::kMaxActStar) {
    backend = make_chat(cfg_.explainer);
    explainer = std::make_unique<JudgeClient>(*backend, JudgeOptions{cfg_.explainer.max_concurrency, cfg_.explainer.temperature});
  }
  int status = kOk;
  for (const auto& f : features()) {
    if (done.count(f.key())) continue;
    const std::uint64_t fseed = feature_seed(seed, f);
    try {
      Description d;
      if (method == DescriptionMethod::kMaxActStar) {
        auto traces = collect_samples(prov, f, c, cfg_.describe.k_pool, cfg_.describe.prompt.n_samples, fseed);
        std::vector<std::string> texts;
        json ids = json::array();
        for (const auto& t : traces) {
          texts.push_back(c.at(t.sentence_id).text);
          ids.push_back(t.sentence_id);
        }
        auto prompt = render_prompt(texts, traces, cfg_.describe.prompt);
        d = explain(f, prompt, *explainer, derive_seed(fseed, "explain"));
        d.provenance["samples"] = ids;
      } else if (method == DescriptionMethod::kTfidf) {
        d = tfidf_describe(prov, f, c, cfg_.describe.tfidf_samples, cfg_.describe.top_k);
      } else if (method == DescriptionMethod::kUnembedding) {
        d = unembedding_describe(prov, f, cfg_.describe.top_k);
      } else {
        throw ConfigError("describe.method", "'external' descriptions are imported with --import");
      }
      d.provenance["config_hash"] = cfg_.hash();
      done[f.key()] = d.to_json();
      write_sorted_jsonl(path, done);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      log("describe " + f.key() + " failed: " + e.what());
      status = kPartialFailure;
    }
  }
  write_sorted_jsonl(path, done);
  return status;
}

int Runner::evaluate() {
  check_manifest();
  EvaluationConfig eval = cfg_.evaluation;
  eval.seed = require_seed();
  eval.validate();
  auto& prov = provider();
  const auto& c = corpus();

  const auto desc_path = cfg_.out / "descriptions.jsonl";
  if (!fs::exists(desc_path)) throw ConfigError("descriptions", "no descriptions in " + cfg_.out.string() + "; run describe first");
  auto desc_records = read_jsonl(desc_path);
  std::vector<Description> todo;
  std::vector<std::string> missing;
  const auto reports_path = cfg_.out / "reports.jsonl";
  auto done = resume_ ? read_jsonl(reports_path) : std::map<std::string, json>{};

  std::vector<std::string> requested;
  const bool all = cfg_.features.empty() || (cfg_.features.size() == 1 && cfg_.features[0] == "all");
  if (all) {
    for (const auto& [k, j] : desc_records) requested.push_back(k);
  } else {
    for (const auto& f : features()) requested.push_back(f.key());
  }
  std::map<std::string, FeatureHandle> handles;
  if (!all || dynamic_cast<SyntheticProvider*>(&prov) || dynamic_cast<ReplayProvider*>(&prov)) {
    for (const auto& f : features()) handles.emplace(f.key(), f);
  }
  for (const auto& key : requested) {
    auto it = desc_records.find(key);
    if (it == desc_records.end()) {
      missing.push_back(key);
      continue;
    }
    if (done.count(key)) continue;
    auto d = Description::from_json(it->second);
    if (auto h = handles.find(key); h != handles.end()) d.feature = h->second;
    todo.push_back(std::move(d));
  }
  for (const auto& k : missing) log("no description for " + k);
  log(std::to_string(todo.size()) + " features to evaluate, " + std::to_string(done.size()) + " already done");

  std::map<std::string, std::vector<TraceAggregate>> cache;
  if (fs::exists(cfg_.out / "scan.jsonl")) {
    for (const auto& [k, j] : read_jsonl(cfg_.out / "scan.jsonl")) {
      const auto& s = j.at("signed_max");
      const auto& a = j.at("abs_max");
      std::vector<TraceAggregate> agg(s.size());
      for (std::size_t i = 0; i < agg.size(); ++i) agg[i] = {s[i].get<double>(), a[i].get<double>()};
      cache.emplace(k, std::move(agg));
    }
  }

  auto judge_backend = make_chat(cfg_.judge);
  EvaluationContext ctx{prov, *judge_backend, c, JudgeOptions{cfg_.judge.max_concurrency, cfg_.judge.temperature},
                        [&cache](const FeatureHandle& f) -> std::optional<std::vector<TraceAggregate>> {
                          auto it = cache.find(f.key());
                          if (it == cache.end()) return std::nullopt;
                          return it->second;
                        }};

  std::ofstream append(reports_path, resume_ ? std::ios::app : std::ios::trunc);
  evaluate_all(todo, eval, ctx, cfg_.workers, [&](const EvaluationReport& r) {
    append << r.to_json().dump() << "\n";
    append.flush();
    log("evaluated " + r.feature.key() + (r.complete() ? "" : " (incomplete)"));
  });
  append.close();

  auto all_reports = read_jsonl(reports_path);
  write_sorted_jsonl(reports_path, all_reports);

  bool complete = missing.empty();
  for (const auto& key : requested) {
    auto it = all_reports.find(key);
    if (it == all_reports.end() || !EvaluationReport::from_json(it->second).complete()) complete = false;
  }
  return complete ? kOk : kPartialFailure;
}

int Runner::summarize() {
  check_manifest();
  std::vector<EvaluationReport> reports;
  for (const auto& [k, j] : read_jsonl(cfg_.out / "reports.jsonl")) reports.push_back(EvaluationReport::from_json(j));
  auto summary = feateval::summarize(reports);
  json sj = summary.to_json();
  std::string table;
  try {
    table = correlation_table(correlate(reports));
  } catch (const Error& e) {
    sj["correlation"] = e.what();
  }
  std::ofstream(cfg_.out / "summary.json") << sj.dump(2) << "\n";
  std::ofstream(cfg_.out / "histograms.tsv") << summary.histogram_table();
  if (!table.empty()) std::ofstream(cfg_.out / "correlation.tsv") << table;
  out_ << sj.dump(2) << "\n";
  return kOk;
}

int Runner::account() {
  json ledger = json::array();
  JudgeUsage total;
  ProviderUsage provider_total;
  const auto path = cfg_.out / "reports.jsonl";
  if (fs::exists(path)) {
    for (const auto& [k, j] : read_jsonl(path)) {
      auto r = EvaluationReport::from_json(j);
      total += r.judge_usage;
      provider_total.activation_calls += r.provider_usage.activation_calls;
      provider_total.activation_texts += r.provider_usage.activation_texts;
      provider_total.generate_calls += r.provider_usage.generate_calls;
      provider_total.logit_calls += r.provider_usage.logit_calls;
      ledger.push_back({{"feature", k},
                        {"judge", r.judge_usage.to_json()},
                        {"judge_calls", r.judge_usage.total_calls()},
                        {"provider",
                         {{"activation_calls", r.provider_usage.activation_calls},
                          {"activation_texts", r.provider_usage.activation_texts},
                          {"generate_calls", r.provider_usage.generate_calls},
                          {"logit_calls", r.provider_usage.logit_calls}}}});
    }
  }
  json account = {{"features", ledger},
                  {"total",
                   {{"judge", total.to_json()},
                    {"judge_calls", total.total_calls()},
                    {"provider",
                     {{"activation_calls", provider_total.activation_calls},
                      {"activation_texts", provider_total.activation_texts},
                      {"generate_calls", provider_total.generate_calls},
                      {"logit_calls", provider_total.logit_calls}}}}}};
  if (fs::exists(cfg_.out)) std::ofstream(cfg_.out / "account.json") << account.dump(2) << "\n";
  out_ << "feature\tjudge_calls\tprompt_tokens\tcompletion_tokens\tsteering_rating_calls\tgenerate_calls\n";
  for (const auto& row : ledger) {
    std::uint64_t prompt = 0, completion = 0;
    for (auto& [purpose, u] : row["judge"].items()) {
      prompt += u["prompt_tokens"].get<std::uint64_t>();
      completion += u["completion_tokens"].get<std::uint64_t>();
    }
    out_ << row["feature"].get<std::string>() << "\t" << row["judge_calls"] << "\t" << prompt << "\t" << completion
         << "\t" << row["judge"]["steering_rating"]["calls"] << "\t" << row["provider"]["generate_calls"] << "\n";
  }
  return kOk;
}

// A small self-contained world: planted model, corpus text, mock judge
// concepts, external descriptions and a config wiring them together.
int Runner::plant() {
  fs::create_directories(cfg_.out);
  const std::uint64_t seed = cfg_.seed.value_or(1);
  PlantedCorpusSpec spec;
  spec.n_sentences = 10000;
  spec.insertions = {{{"an active volcano", "the lava flow"}, 30},
                     {{"a violin", "the cello"}, 30},
                     {{"years of work under his belt", "a decade under her belt"}, 30},
                     {{"a leather belt", "the black belt"}, 40}};
  auto sentences = make_planted_corpus(spec, seed);
  {
    std::ofstream o(cfg_.out / "corpus.txt");
    for (const auto& s : sentences) o << s.text << "\n";
  }

  PlantedModel m;
  m.model_id = "planted";
  m.vocab = {"volcano", "lava", "violin", "cello", "belt", "music", "fire", "leather"};
  m.unembedding.assign(m.vocab.size(), std::vector<double>(m.vocab.size(), 0.0));
  for (std::size_t i = 0; i < m.vocab.size(); ++i) m.unembedding[i][i] = 1.0;
  PlantedFeature mono;
  mono.index = 0;
  mono.lexicon = {{"volcano", 1.0}, {"lava", 1.0}};
  mono.steering.emit = {"volcano", "lava"};
  mono.decoder = {0.9, 0.8, 0, 0, 0, 0, 0.5, 0};
  PlantedFeature poly;
  poly.index = 1;
  poly.lexicon = {{"volcano", 0.7}, {"lava", 0.7}, {"violin", 1.0}, {"cello", 1.0}};
  poly.steering.emit = {"violin", "cello"};
  poly.decoder = {0.4, 0.3, 0.9, 0.8, 0, 0.6, 0, 0};
  PlantedFeature gated;
  gated.index = 2;
  gated.kind = FeatureKind::kSaeLatent;
  gated.max_observed_activation = 1.0;
  gated.gated = {GatedRule{"belt", {"under"}, 3, 1.0, 0.0}};
  gated.steering.emit = {"belt"};
  gated.decoder = {0, 0, 0, 0, 0.9, 0, 0, 0.7};
  m.features = {mono, poly, gated};
  std::ofstream(cfg_.out / "planted_model.json") << m.to_json().dump(2) << "\n";

  std::vector<MockConcept> registry = {
      {"Volcanoes and lava", {"volcano", "lava"}, {"fire", "eruption"}},
      {"Bowed string instruments such as the violin and cello", {"violin", "cello"}, {"music"}},
  };
  std::ofstream(cfg_.out / "mock_concepts.json") << registry_to_json(registry).dump(2) << "\n";

  std::ofstream(cfg_.out / "descriptions.jsonl")
      << json{{"feature", "planted/0/neuron/0"}, {"description", "Volcanoes and lava"}}.dump() << "\n"
      << json{{"feature", "planted/0/neuron/1"}, {"description", "Volcanoes and lava"}}.dump() << "\n"
      << json{{"feature", "planted/0/sae/2"}, {"description", "belt"}}.dump() << "\n";

  json config = {
      {"corpus", {{"inputs", {"corpus.txt"}}}},
      {"provider", {{"kind", "synthetic"}, {"model", "planted_model.json"}}},
      {"judge", {{"kind", "mock"}, {"registry", "mock_concepts.json"}}},
      // Planted features fire on a few dozen sentences; a 1000-sentence pool would bury them.
      {"describe", {{"k_pool", 20}}},
      {"features", "all"},
      {"seed", seed},
      {"workers", 2},
      {"output", "run"},
  };
  std::ofstream(cfg_.out / "config.json") << config.dump(2) << "\n";
  out_ << "wrote demo world to " << cfg_.out.string() << "\n";
  return kOk;
}

void report_error(std::ostream& err, const std::string& code, const std::string& message, const std::string& field = {}) {
  json j = {{"error", code}, {"message", message}};
  if (!field.empty()) j["field"] = field;
  err << j.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Feature description evaluation engine"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "Run configuration (JSON)");
  app.add_option("--features", o.features, "Feature keys, comma separated; 'model/layer/kind/lo-hi' ranges; or 'all'");
  app.add_option("--seed", o.seed, "Run seed");
  app.add_option("--workers", o.workers, "Features evaluated in parallel");
  app.add_flag("--resume", o.resume, "Skip features whose outputs already exist");
  app.add_option("--provider", o.provider, "Provider override: synthetic:<model>, replay:<dump> or remote:<url>");
  app.add_option("--judge", o.judge, "Judge override: mock or openai[:<model>]");
  app.add_option("--out", o.out, "Output directory");

  auto* preprocess = app.add_subcommand("preprocess", "Build the sentence corpus");
  auto* scan = app.add_subcommand("scan", "Cache per-sentence activation aggregates");
  auto* describe = app.add_subcommand("describe", "Generate or import feature descriptions");
  describe->add_option("--import", o.import_path, "Import descriptions from a JSONL file instead of generating");
  describe->add_option("--method", o.method, "maxact_star, tfidf or unembedding");
  auto* evaluate = app.add_subcommand("evaluate", "Score descriptions");
  auto* summarize = app.add_subcommand("summarize", "Aggregate reports into a run summary");
  auto* account = app.add_subcommand("account", "Judge and provider usage per feature");
  auto* plant = app.add_subcommand("plant", "Write a small planted demo world");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "ConfigError", e.what());
    return kConfigInvalid;
  }

  try {
    RunConfig cfg;
    if (!o.config_path.empty()) {
      std::ifstream in(o.config_path);
      if (!in) throw ConfigError("config", "cannot read " + o.config_path);
      json j = json::parse(in, nullptr, false);
      if (j.is_discarded()) throw ConfigError("config", o.config_path + " is not valid JSON");
      cfg = RunConfig::from_json(j, fs::path(o.config_path).parent_path());
    }
    if (!o.features.empty()) cfg.features = {o.features};
    if (o.seed) cfg.seed = o.seed;
    if (o.workers) cfg.workers = std::max<std::size_t>(1, *o.workers);
    if (!o.out.empty()) cfg.out = o.out;
    if (!o.provider.empty()) {
      auto colon = o.provider.find(':');
      cfg.provider.kind = o.provider.substr(0, colon);
      const std::string arg = colon == std::string::npos ? std::string() : o.provider.substr(colon + 1);
      if (cfg.provider.kind == "synthetic" && !arg.empty()) cfg.provider.model = arg;
      if (cfg.provider.kind == "replay" && !arg.empty()) cfg.provider.dump = arg;
      if (cfg.provider.kind == "remote") cfg.provider.endpoint = arg;
    }
    if (!o.judge.empty()) {
      auto colon = o.judge.find(':');
      cfg.judge.kind = o.judge.substr(0, colon);
      if (cfg.judge.kind != "mock" && cfg.judge.kind != "openai") throw ConfigError("judge", "must be mock or openai");
      if (colon != std::string::npos) cfg.judge.model = o.judge.substr(colon + 1);
    }
    if (!o.method.empty()) cfg.describe.method = o.method;

    Runner runner(cfg, o.resume, out, err);
    if (*preprocess) return runner.preprocess();
    if (*scan) return runner.scan();
    if (*describe) return runner.describe(o.import_path);
    if (*evaluate) return runner.evaluate();
    if (*summarize) return runner.summarize();
    if (*account) return runner.account();
    if (*plant) return runner.plant();
    return kConfigInvalid;
  } catch (const ConfigError& e) {
    report_error(err, "ConfigError", e.detail(), e.field());
    return kConfigInvalid;
  } catch (const Error& e) {
    report_error(err, std::string(error_code_name(e.code())), e.detail());
    switch (e.code()) {
      case ErrorCode::kProviderUnavailable:
        return kDependencyUnavailable;
      case ErrorCode::kCorpusEmpty:
      case ErrorCode::kInsufficientCorpus:
      case ErrorCode::kFeatureNotFound:
        return kConfigInvalid;
      default:
        return kPartialFailure;
    }
  } catch (const std::exception& e) {
    report_error(err, "Internal", e.what());
    return kInternalError;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace feateval::cli

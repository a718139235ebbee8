#include <doctest.h>

#include <string>
#include <vector>

#include "feateval/error.hpp"
#include "feateval/protocol.hpp"
#include "feateval/synthetic_provider.hpp"
#include "golden.hpp"

using namespace feateval;
using namespace feateval::protocol;
using feateval::testing::fixture;
using feateval::testing::golden;
using feateval::testing::read_fixture;

namespace {

FeatureHandle sae() {
  FeatureHandle f;
  f.model_id = "gemma-2-2b";
  f.layer = 12;
  f.kind = FeatureKind::kSaeLatent;
  f.index = 4711;
  f.max_observed_activation = 7.2;
  return f;
}

ActivationTrace trace() {
  return ActivationTrace::make(3, {"The", " lava", " flowed"}, {0.0, 2.5, -0.5}, {{0, 3}, {3, 8}, {8, 15}});
}

struct Case {
  std::string name;
  Message message;
  json value;
};

std::vector<Case> cases() {
  std::vector<Sentence> texts = {{3, "The lava flowed", ""}, {9, "Quiet morning", ""}};
  std::vector<ActivationTrace> traces = {trace()};
  std::vector<std::string> continuations = {" and then it cooled", " over the hills"};
  LogitWeightVector lw{{"lava", "magma", "ice"}, {0.5, 0.25, -1.0}};
  return {
      {"activations_request", Message::kActivationsRequest, activations_request(sae(), texts)},
      {"activations_response", Message::kActivationsResponse, activations_response(traces)},
      {"generate_request", Message::kGenerateRequest, generate_request(texts, SteeringSpec{sae(), 50, 30}, 11)},
      {"generate_response", Message::kGenerateResponse, generate_response(continuations)},
      {"logit_weights_request", Message::kLogitWeightsRequest, logit_weights_request(sae())},
      {"logit_weights_response", Message::kLogitWeightsResponse, logit_weights_response(lw)},
      {"health_response", Message::kHealthResponse, health_response("tiny", {true, true})},
      {"error_response", Message::kErrorResponse, error_response(ErrorCode::kFeatureNotFound, "no such latent")},
  };
}

}  // namespace

TEST_CASE("messages match frozen fixtures and validate") {
  for (const auto& c : cases()) {
    CAPTURE(c.name);
    const std::string text = c.value.dump(2) + "\n";
    const std::string frozen = golden(fixture("protocol/" + c.name + ".json"), text);
    REQUIRE_FALSE(frozen.empty());
    CHECK(frozen == text);
    const json parsed = json::parse(frozen);
    CHECK_NOTHROW(validate(c.message, parsed));
    CHECK(parsed.dump(2) + "\n" == frozen);
  }
}

TEST_CASE("fixtures round-trip through the parsers") {
  auto act = json::parse(read_fixture(fixture("protocol/activations_response.json")));
  auto traces = parse_activations_response(act, 1);
  REQUIRE(traces.size() == 1);
  CHECK(traces[0].activations == trace().activations);
  CHECK(traces[0].offsets == trace().offsets);
  std::vector<ActivationTrace> again = {traces[0]};
  CHECK(activations_response(again) == act);

  auto gen = json::parse(read_fixture(fixture("protocol/generate_response.json")));
  auto cont = parse_generate_response(gen, 2);
  CHECK(generate_response(cont) == gen);

  auto lw = json::parse(read_fixture(fixture("protocol/logit_weights_response.json")));
  CHECK(logit_weights_response(parse_logit_weights_response(lw)) == lw);

  auto req = json::parse(read_fixture(fixture("protocol/generate_request.json")));
  CHECK(req["steering"]["mode"] == "pin");
  CHECK(req["steering"]["value"].get<double>() == doctest::Approx(360.0));
  CHECK(feature_from_json(req["steering"]["feature"]) == sae());
}

TEST_CASE("validation names the offending path") {
  auto bad = activations_request(sae(), std::vector<Sentence>{{0, "x", ""}});
  bad["texts"][0]["id"] = "zero";
  try {
    validate(Message::kActivationsRequest, bad);
    FAIL("expected ProtocolError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kProtocolError);
    CHECK(std::string(e.what()).find("texts") != std::string::npos);
  }
  auto extra = generate_response(std::vector<std::string>{"a"});
  extra["surprise"] = 1;
  CHECK_THROWS_AS(validate(Message::kGenerateResponse, extra), Error);
  auto wrong_version = health_response("m", {});
  wrong_version["version"] = "2";
  CHECK_THROWS_AS(validate(Message::kHealthResponse, wrong_version), Error);
}

TEST_CASE("response length mismatch is a protocol error") {
  auto gen = generate_response(std::vector<std::string>{"a"});
  CHECK_THROWS_AS(parse_generate_response(gen, 2), Error);
}

TEST_CASE("error envelopes map back to engine errors") {
  try {
    throw_if_error(error_response(ErrorCode::kFeatureNotFound, "gone"));
    FAIL("expected FeatureNotFound");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFeatureNotFound);
    CHECK(e.detail() == "gone");
  }
  CHECK_NOTHROW(throw_if_error(health_response("m", {})));
}

TEST_CASE("dispatch serves a provider") {
  PlantedModel m;
  PlantedFeature f;
  f.lexicon = {{"lava", 2.0}};
  f.steering.emit = {"lava"};
  m.features = {f};
  SyntheticProvider provider(m);
  auto h = provider.handle(0);

  auto res = dispatch(provider, "activations", activations_request(h, std::vector<Sentence>{{0, "hot lava", ""}}));
  CHECK_NOTHROW(validate(Message::kActivationsResponse, res));
  CHECK(parse_activations_response(res, 1)[0].aggregate == 2.0);

  auto err = dispatch(provider, "logit_weights", logit_weights_request(h));
  CHECK_NOTHROW(validate(Message::kErrorResponse, err));
  CHECK_THROWS_AS(throw_if_error(err), Error);

  auto bad = dispatch(provider, "activations", json{{"version", "1"}});
  CHECK(bad.contains("error"));
}

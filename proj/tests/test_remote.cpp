#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "feateval/error.hpp"
#include "feateval/protocol.hpp"
#include "feateval/remote_provider.hpp"
#include "feateval/synthetic_provider.hpp"

using namespace feateval;
using protocol::json;

namespace {

PlantedModel tiny_model() {
  PlantedModel m;
  m.model_id = "tiny";
  m.vocab = {"lava", "ice"};
  m.unembedding = {{1.0, 0.0}, {0.0, 1.0}};
  PlantedFeature f;
  f.lexicon = {{"lava", 1.5}};
  f.steering.emit = {"lava"};
  f.decoder = {0.25, 0.75};
  m.features = {f};
  return m;
}

// Loopback sidecar speaking the wire protocol over a synthetic provider.
class Sidecar {
 public:
  explicit Sidecar(Provider& provider) : provider_(provider) {
    server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(protocol::health_response("tiny", provider_.capabilities()).dump(), "application/json");
    });
    for (const std::string endpoint : {"activations", "generate", "logit_weights"}) {
      server_.Post("/v1/" + endpoint, [this, endpoint](const httplib::Request& req, httplib::Response& res) {
        ++requests;
        if (fail_next > 0) {
          --fail_next;
          res.status = 502;
          return;
        }
        auto out = protocol::dispatch(provider_, endpoint, json::parse(req.body));
        res.set_content(out.dump(), "application/json");
      });
    }
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Sidecar() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> requests{0};
  std::atomic<int> fail_next{0};

 private:
  Provider& provider_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

RemoteProviderOptions options(const std::string& endpoint) {
  RemoteProviderOptions o;
  o.endpoint = endpoint;
  o.timeout = std::chrono::milliseconds(5000);
  o.retry_backoff = std::chrono::milliseconds(1);
  return o;
}

}  // namespace

TEST_CASE("remote client interoperates with a loopback sidecar") {
  SyntheticProvider local(tiny_model());
  Sidecar sidecar(local);
  RemoteProvider remote(options(sidecar.endpoint()));

  CHECK(remote.id() == "remote:tiny");
  CHECK(remote.capabilities().steering);
  CHECK(remote.capabilities().logit_weights);

  auto h = local.handle(0);
  std::vector<Sentence> texts = {{0, "lava and ice", ""}, {1, "nothing here", ""}};
  auto a = remote.activations(h, texts);
  auto b = local.activations(h, texts);
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].activations == b[i].activations);
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].aggregate == b[i].aggregate);
  }

  SteeringSpec spec{h, 10, 12};
  CHECK(remote.generate_steered(texts, spec, 5) == local.generate_steered(texts, spec, 5));
  CHECK(remote.logit_weights(h).weights == local.logit_weights(h).weights);
}

TEST_CASE("zero steering factor leaves generation unchanged") {
  SyntheticProvider local(tiny_model());
  Sidecar sidecar(local);
  RemoteProvider remote(options(sidecar.endpoint()));
  auto h = local.handle(0);
  std::vector<Sentence> prompts = {{0, "a", ""}, {1, "b", ""}, {2, "c", ""}};
  auto steered = remote.generate_steered(prompts, SteeringSpec{h, 0, 20}, 9);
  auto direct = local.generate_steered(prompts, SteeringSpec{h, 0, 20}, 9);
  CHECK(steered == direct);
}

TEST_CASE("transport failures are retried, then reported unavailable") {
  SyntheticProvider local(tiny_model());
  Sidecar sidecar(local);
  RemoteProvider remote(options(sidecar.endpoint()));
  auto h = local.handle(0);
  std::vector<Sentence> texts = {{0, "lava", ""}};

  sidecar.fail_next = 1;
  CHECK(remote.activations(h, texts).size() == 1);

  sidecar.fail_next = 10;
  try {
    remote.activations(h, texts);
    FAIL("expected ProviderUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kProviderUnavailable);
  }
}

TEST_CASE("server-side errors come back as engine errors") {
  SyntheticProvider local(tiny_model());
  Sidecar sidecar(local);
  RemoteProvider remote(options(sidecar.endpoint()));
  auto h = local.handle(0);
  h.index = 5;
  std::vector<Sentence> texts = {{0, "lava", ""}};
  try {
    remote.activations(h, texts);
    FAIL("expected FeatureNotFound");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFeatureNotFound);
  }
}

TEST_CASE("unreachable endpoint is ProviderUnavailable") {
  auto o = options("http://127.0.0.1:1");
  o.transport_retries = 0;
  RemoteProvider remote(o);
  try {
    remote.capabilities();
    FAIL("expected ProviderUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kProviderUnavailable);
  }
}

#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "support.hpp"
#include "ugcsim/error.hpp"
#include "ugcsim/llm_backend.hpp"

using namespace ugcsim;

namespace {

// Local chat-completions stub. The first `failures` requests get `fail_status`.
class StubServer {
 public:
  StubServer(int failures, int fail_status) : failures_(failures), fail_status_(fail_status) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = hits_++;
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      if (n < failures_) {
        res.status = fail_status_;
        res.set_content("{\"error\":\"busy\"}", "application/json");
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      nlohmann::json out = {
          {"choices", {{{"message", {{"role", "assistant"},
                                     {"content", "echo: " + body["messages"][0]["content"].get<std::string>()}}}}}},
          {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}};
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int hits() const { return hits_; }
  std::string last_body() const { return last_body_; }
  std::string last_auth() const { return last_auth_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  int failures_;
  int fail_status_;
  std::string last_body_, last_auth_;
};

HttpSettings fast(const StubServer& s) {
  HttpSettings h;
  h.base_url = s.base_url();
  h.backoff_base_ms = 1.0;
  h.timeout_seconds = 5.0;
  h.api_key = "secret";
  return h;
}

}  // namespace

TEST_CASE("fresh backends report zero usage") {
  ScriptedBackend b([](const ChatRequest&) { return "x"; });
  const auto r = b.usage_report();
  CHECK(r.total.calls == 0);
  CHECK(r.total.prompt_tokens == 0);
  CHECK(r.site(CallSite::kDecision).calls == 0);
  CHECK(r.network_calls == 0);
}

TEST_CASE("usage totals equal the per-call log") {
  ScriptedBackend b([](const ChatRequest& r) { return r.messages[0].content + " reply"; });
  for (int i = 0; i < 7; ++i) b.complete(ChatRequest::user("one two three " + std::to_string(i), CallSite::kDecision));
  b.complete(ChatRequest::user("summary please", CallSite::kSummary));
  const auto r = b.usage_report();
  std::size_t prompt = 0, completion = 0;
  for (const auto& c : b.call_log()) {
    prompt += c.prompt_tokens;
    completion += c.completion_tokens;
  }
  CHECK(r.total.calls == 8);
  CHECK(r.total.prompt_tokens == prompt);
  CHECK(r.total.completion_tokens == completion);
  CHECK(r.site(CallSite::kDecision).calls == 7);
  CHECK(r.site(CallSite::kSummary).calls == 1);
  CHECK(r.site(CallSite::kDecision).prompt_tokens + r.site(CallSite::kSummary).prompt_tokens == prompt);
  b.reset_usage();
  CHECK(b.usage_report().total.calls == 0);
}

TEST_CASE("concurrency gate bounds in-flight calls") {
  std::atomic<int> in_flight{0}, peak{0};
  BackendSettings s;
  s.concurrency_limit = 2;
  ScriptedBackend b(
      [&](const ChatRequest&) {
        const int now = ++in_flight;
        int p = peak;
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --in_flight;
        return std::string("ok");
      },
      s);
  std::vector<std::thread> ts;
  for (int i = 0; i < 6; ++i) ts.emplace_back([&] { b.complete(ChatRequest::user("x", CallSite::kOther)); });
  for (auto& t : ts) t.join();
  CHECK(peak <= 2);
  CHECK(b.usage_report().total.calls == 6);
}

TEST_CASE("rule responder") {
  ScriptedRules rules;
  rules.decision = parse_decision_rules("1:9:like;0:2:do_nothing");
  auto respond = make_rule_responder(rules);
  const auto req = [](std::string post) {
    return ChatRequest::user("#task: decision\nInterests: cats, travel\nPost text: " + post, CallSite::kDecision);
  };
  CHECK(respond(req("My cat is asleep on cats")) == "ACTION: like\nOPINION: 9\n");
  CHECK(respond(req("tax forms")) == "ACTION: do_nothing\nOPINION: 2\n");
  CHECK(respond(ChatRequest::user("hello", CallSite::kOther)) == "OK");
  CHECK(format_decision_rules(parse_decision_rules("2:9:reply;1:8:like;0:2:do_nothing")) ==
        "2:9:reply;1:8:like;0:2:do_nothing");
  CHECK_THROWS_AS(parse_decision_rules("2:9"), ConfigError);
  CHECK_THROWS_AS(parse_decision_rules("1:9:dance"), ConfigError);
}

TEST_CASE("backoff schedule grows") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = backoff_schedule(100.0, 5, seed, 3);
    REQUIRE(d.size() == 5);
    for (std::size_t k = 0; k < d.size(); ++k) {
      const double base = 100.0 * std::pow(2.0, static_cast<double>(k));
      CHECK(d[k] >= base);
      CHECK(d[k] < 1.5 * base);
      if (k > 0) CHECK(d[k] > d[k - 1]);
    }
    CHECK(backoff_schedule(100.0, 5, seed, 3) == d);
  }
}

TEST_CASE("http backend retries 429 twice then succeeds") {
  StubServer server(2, 429);
  BackendSettings s;
  s.model = "stub-model";
  s.max_retries = 3;
  HttpBackend b(fast(server), s);
  const auto resp = b.complete(ChatRequest::user("hi there", CallSite::kDecision));
  CHECK(resp.text == "echo: hi there");
  CHECK(resp.retries == 2);
  CHECK(resp.usage.prompt_tokens == 11);
  CHECK_FALSE(resp.usage.estimated);
  CHECK(server.hits() == 3);
  CHECK(server.last_auth() == "Bearer secret");
  const auto body = nlohmann::json::parse(server.last_body());
  CHECK(body["model"] == "stub-model");
  CHECK(body["temperature"] == 1.0);
  const auto r = b.usage_report();
  CHECK(r.total.retries == 2);
  CHECK(r.network_calls == 3);
  const auto delays = b.observed_delays_ms();
  REQUIRE(delays.size() == 2);
  CHECK(delays[1] > delays[0]);
}

TEST_CASE("http backend gives up after max retries") {
  StubServer server(10, 503);
  BackendSettings s;
  s.max_retries = 2;
  HttpBackend b(fast(server), s);
  CHECK_THROWS_AS(b.complete(ChatRequest::user("hi", CallSite::kDecision)), BackendError);
  CHECK(server.hits() == 3);
}

TEST_CASE("http backend does not retry client errors") {
  StubServer server(10, 400);
  HttpBackend b(fast(server), {});
  CHECK_THROWS_AS(b.complete(ChatRequest::user("hi", CallSite::kDecision)), BackendError);
  CHECK(server.hits() == 1);
}

TEST_CASE("http backend reports an unreachable endpoint") {
  HttpSettings h;
  h.base_url = "http://127.0.0.1:1/v1";
  h.backoff_base_ms = 1.0;
  h.timeout_seconds = 1.0;
  BackendSettings s;
  s.max_retries = 1;
  HttpBackend b(h, s);
  CHECK_THROWS_AS(b.complete(ChatRequest::user("hi", CallSite::kDecision)), BackendError);
  HttpSettings bare;
  bare.base_url = "localhost:80";
  CHECK_THROWS_AS(HttpBackend(bare, {}), ConfigError);
}

TEST_CASE("cache keys normalize whitespace and include generation settings") {
  const auto a = ResponseCache::key_for(ChatRequest::user("hello   world\n", CallSite::kOther), "m", 1.0);
  const auto b = ResponseCache::key_for(ChatRequest::user(" hello world", CallSite::kDecision), "m", 1.0);
  CHECK(a == b);
  CHECK(a != ResponseCache::key_for(ChatRequest::user("hello world", CallSite::kOther), "m2", 1.0));
  CHECK(a != ResponseCache::key_for(ChatRequest::user("hello world", CallSite::kOther), "m", 0.5));
  CHECK(a.size() == 64);
}

TEST_CASE("recorded runs replay without network calls") {
  const auto dir = testing::scratch_dir("replay");
  StubServer server(0, 500);
  std::vector<std::string> prompts{"first prompt", "second prompt", "first prompt"};
  std::vector<std::string> recorded;
  {
    BackendSettings s;
    s.model = "stub-model";
    CachingBackend caching(std::make_unique<HttpBackend>(fast(server), s), dir);
    for (const auto& p : prompts) recorded.push_back(caching.complete(ChatRequest::user(p, CallSite::kDecision)).text);
    CHECK(server.hits() == 2);  // third prompt was a cache hit
    CHECK(caching.usage_report().network_calls == 2);
  }
  BackendSettings s;
  s.model = "stub-model";
  CachedReplayBackend replay(dir, s);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto r = replay.complete(ChatRequest::user(prompts[i], CallSite::kDecision));
    CHECK(r.text == recorded[i]);
    CHECK(r.from_cache);
  }
  CHECK(replay.usage_report().network_calls == 0);
  CHECK(server.hits() == 2);
  CHECK_THROWS_AS(replay.complete(ChatRequest::user("never recorded", CallSite::kDecision)), CacheMissError);
}

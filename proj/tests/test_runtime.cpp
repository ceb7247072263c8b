#include <doctest.h>

#include <mutex>
#include <random>
#include <sstream>

#include "support.hpp"
#include "ugcsim/error.hpp"
#include "ugcsim/runtime.hpp"
#include "ugcsim/trace_io.hpp"

using namespace ugcsim;

namespace {

const PersonaPools& pools() {
  static const PersonaPools p = PersonaPools::load_default();
  return p;
}

// n agents on a complete mutual graph, every one with the given base rate.
Population complete_population(std::size_t n, double base) {
  Population pop;
  pop.graph = SocialGraph(n);
  for (AgentId i = 0; i < n; ++i) {
    pop.agents.push_back(testing::make_agent(i, {"cats", "travel"}, base));
    for (AgentId j = i + 1; j < n; ++j) pop.graph.add_mutual(i, j);
  }
  return pop;
}

Population generated(std::size_t n, std::uint64_t seed) {
  PopulationConfig cfg;
  cfg.n_agents = n;
  cfg.seed = seed;
  return build_population(cfg, pools());
}

UgcPost cat_post() { return {"p1", "Two cats travel by train", std::nullopt, {}, std::nullopt}; }

bool is_decision(const ChatRequest& r) {
  return r.messages.back().content.rfind("#task: decision", 0) == 0;
}

}  // namespace

TEST_CASE("decision prompt contents") {
  auto cfg = RuntimeConfig::with_default_prompts();
  auto agent = testing::make_agent(3, {"cats"}, 0.3);
  MeanFieldState mf{{"Several users liked the post.", 2}, 4.25};

  const auto empty = build_decision_prompt(agent, cat_post(), mf, {}, cfg);
  CHECK(empty.find("no prior interactions") != std::string::npos);
  CHECK(empty.find("Several users liked the post.") != std::string::npos);
  CHECK(empty.find("4.25") != std::string::npos);
  CHECK(empty.find("Two cats travel by train") != std::string::npos);

  std::deque<MemoryEntry> mem;
  for (int s = 1; s <= 25; ++s) mem.push_back({s, MemoryKind::kOwnAction, "entry-" + std::to_string(s) + "."});
  const auto trimmed = build_decision_prompt(agent, cat_post(), mf, mem, cfg);
  for (int s = 1; s <= 5; ++s) CHECK(trimmed.find("entry-" + std::to_string(s) + ".") == std::string::npos);
  for (int s = 6; s <= 25; ++s) CHECK(trimmed.find("entry-" + std::to_string(s) + ".") != std::string::npos);
}

TEST_CASE("every prompt lists exactly the five actions") {
  auto cfg = RuntimeConfig::with_default_prompts();
  const auto pop = generated(100, 4);
  for (auto mode : {SimMode::kSmf, SimMode::kStandard}) {
    cfg.mode = mode;
    for (const auto& a : pop.agents) {
      const auto p = build_decision_prompt(a, cat_post(), {}, {}, cfg);
      const auto menu = p.substr(p.find("Available actions:"));
      std::size_t items = 0;
      for (std::size_t pos = menu.find("\n- "); pos != std::string::npos; pos = menu.find("\n- ", pos + 1)) ++items;
      CHECK(items == 5);
      for (auto k : kAllActionKinds) CHECK(menu.find("- " + std::string(to_string(k)) + ":") != std::string::npos);
    }
  }
}

TEST_CASE("decision parsing") {
  auto like = parse_decision("ACTION: like\nOPINION: 8", 4, "p");
  REQUIRE(like);
  CHECK(like->action == AgentAction{4, ActionKind::kLike, "p", std::nullopt});
  CHECK(like->new_opinion == 8.0);

  auto clamp = parse_decision("OPINION: 14", 4, "p");
  REQUIRE(clamp);
  CHECK(clamp->new_opinion == 10.0);
  CHECK(clamp->action.kind == ActionKind::kDoNothing);

  auto md = parse_decision("**ACTION:** Reply\n**OPINION:** 7.5\n**CONTENT:** nice one\nTARGET: s2-a9", 1, "p");
  REQUIRE(md);
  CHECK(md->action.kind == ActionKind::kReply);
  CHECK(md->action.target == "s2-a9");
  CHECK(md->action.content == "nice one");

  CHECK_FALSE(parse_decision("ACTION: like", 1, "p"));
  CHECK_FALSE(parse_decision("ACTION: dance\nOPINION: 3", 1, "p"));
  CHECK_FALSE(parse_decision("ACTION: post\nOPINION: 3", 1, "p"));
  CHECK_FALSE(parse_decision("garbage", 1, "p"));
}

TEST_CASE("garbage twice falls back to the prior opinion") {
  int calls = 0;
  ScriptedBackend b([&](const ChatRequest&) {
    ++calls;
    return std::string("I like turtles");
  });
  auto agent = testing::make_agent(0, {"cats"}, 0.3, 6.5);
  const auto r = decide(b, "prompt", agent, "p");
  CHECK(calls == 2);
  CHECK(r.fell_back);
  CHECK(r.outcome.action.kind == ActionKind::kDoNothing);
  CHECK(r.outcome.new_opinion == 6.5);
  CHECK_FALSE(r.warning.empty());

  int n = 0;
  ScriptedBackend second([&](const ChatRequest& req) {
    return ++n == 1 ? std::string("??")
                    : (req.messages[0].content.find("could not be parsed") != std::string::npos
                           ? std::string("ACTION: like\nOPINION: 7")
                           : std::string("??"));
  });
  const auto ok = decide(second, "prompt", agent, "p");
  CHECK_FALSE(ok.fell_back);
  CHECK(ok.outcome.new_opinion == 7.0);
}

TEST_CASE("call accounting for a fixed run") {
  auto cfg = RuntimeConfig::with_default_prompts();
  ScriptedBackend b([](const ChatRequest& r) {
    return is_decision(r) ? std::string("ACTION: like\nOPINION: 8") : std::string("Everyone likes it.");
  });
  const auto trace = run_simulation(cat_post(), complete_population(5, 2.0), cfg, b);
  REQUIRE(trace.complete);
  const auto u = b.usage_report();
  CHECK(u.site(CallSite::kDecision).calls == 30);
  CHECK(u.site(CallSite::kSummary).calls == 6);
  CHECK(u.total.calls == 36);
  for (const auto& s : trace.steps) CHECK(s.m_text == "Everyone likes it.");
}

TEST_CASE("identical inputs give byte-identical traces") {
  auto cfg = RuntimeConfig::with_default_prompts();
  cfg.seed = 1;
  const auto pop = generated(200, 1);
  auto run = [&] {
    ScriptedBackend b(make_rule_responder({}));
    return serialize_trace(run_simulation(cat_post(), pop, cfg, b));
  };
  const auto a = run();
  CHECK(a == run());
  cfg.concurrency = 1;
  CHECK(a == run());
}

TEST_CASE("no activation means no actions") {
  auto cfg = RuntimeConfig::with_default_prompts();
  ScriptedBackend b(make_rule_responder({}));
  const auto trace = run_simulation(cat_post(), complete_population(8, 0.0), cfg, b);
  REQUIRE(trace.steps.size() == 6);
  for (const auto& s : trace.steps) {
    CHECK(s.actions.empty());
    CHECK(s.m_num == 0.0);
    CHECK(s.m_text == kNoActivitySentinel);
  }
  CHECK(b.usage_report().total.calls == 0);
}

TEST_CASE("uniformly enthusiastic agents push the mean up monotonically") {
  auto cfg = RuntimeConfig::with_default_prompts();
  ScriptedBackend b([](const ChatRequest& r) {
    return is_decision(r) ? std::string("ACTION: like\nOPINION: 10") : std::string("summary");
  });
  const auto trace = run_simulation(cat_post(), generated(150, 2), cfg, b);
  REQUIRE(trace.complete);
  for (std::size_t t = 1; t < trace.steps.size(); ++t) {
    CHECK(trace.steps[t].m_num >= trace.steps[t - 1].m_num);
  }
  CHECK(trace.steps.back().m_num > 0.0);
}

TEST_CASE("likes on an action reference reach the target's memory") {
  auto cfg = RuntimeConfig::with_default_prompts();
  cfg.rounds = 2;
  std::mutex mu;
  std::vector<std::string> agent0_prompts;
  ScriptedBackend b([&](const ChatRequest& r) {
    const auto& p = r.messages[0].content;
    if (!is_decision(r)) return std::string("summary");
    if (p.find("Name: Agent0") != std::string::npos) {
      std::lock_guard lock(mu);
      agent0_prompts.push_back(p);
      return std::string("ACTION: post\nOPINION: 8\nCONTENT: look at this");
    }
    return std::string("ACTION: like\nOPINION: 8\nTARGET: s1-a0");
  });
  const auto trace = run_simulation(cat_post(), complete_population(2, 2.0), cfg, b);
  REQUIRE(trace.complete);
  REQUIRE(agent0_prompts.size() == 2);
  CHECK(agent0_prompts[0].find("Agent1 liked post s1-a0.") == std::string::npos);
  CHECK(agent0_prompts[1].find("Agent1 liked post s1-a0.") != std::string::npos);
  CHECK(agent0_prompts[1].find("You posted: \"look at this\"") != std::string::npos);
}

TEST_CASE("standard mode shows neighbours instead of the mean field") {
  auto cfg = RuntimeConfig::with_default_prompts();
  cfg.mode = SimMode::kStandard;
  cfg.rounds = 2;
  std::mutex mu;
  std::vector<std::string> prompts;
  ScriptedBackend b([&](const ChatRequest& r) {
    std::lock_guard lock(mu);
    prompts.push_back(r.messages[0].content);
    return std::string("ACTION: reply\nOPINION: 7\nCONTENT: so good");
  });
  const auto trace = run_simulation(cat_post(), complete_population(3, 2.0), cfg, b);
  REQUIRE(trace.complete);
  CHECK(b.usage_report().site(CallSite::kSummary).calls == 0);
  CHECK(prompts.size() == 6);
  for (const auto& s : trace.steps) CHECK(s.m_text.empty());
  bool saw_neighbour = false;
  for (const auto& p : prompts) {
    CHECK(p.find("Average opinion of all users") == std::string::npos);
    if (p.find("[s1-a1] Agent1 replied to post p1: \"so good\"") != std::string::npos) saw_neighbour = true;
  }
  CHECK(saw_neighbour);
}

TEST_CASE("standard mode costs more prompt tokens than the mean field") {
  const auto pop = generated(200, 1);
  auto tokens = [&](SimMode mode) {
    auto cfg = RuntimeConfig::with_default_prompts();
    cfg.mode = mode;
    ScriptedBackend b(make_rule_responder({}));
    (void)run_simulation(cat_post(), pop, cfg, b);
    return b.usage_report().total.prompt_tokens;
  };
  CHECK(tokens(SimMode::kStandard) > tokens(SimMode::kSmf));
}

TEST_CASE("backend failures leave a partial trace") {
  auto cfg = RuntimeConfig::with_default_prompts();
  std::atomic<int> n{0};
  ScriptedBackend b([&](const ChatRequest& r) {
    if (is_decision(r) && ++n > 6) throw BackendError("endpoint down");
    return is_decision(r) ? std::string("ACTION: like\nOPINION: 5") : std::string("s");
  });
  const auto trace = run_simulation(cat_post(), complete_population(3, 2.0), cfg, b);
  CHECK_FALSE(trace.complete);
  CHECK(trace.steps.size() == 2);
  CHECK(trace.error.find("endpoint down") != std::string::npos);
  CHECK_THROWS_AS(extract_features(trace), DataIntegrityError);
}

TEST_CASE("runtime rejects inconsistent inputs") {
  auto cfg = RuntimeConfig::with_default_prompts();
  ScriptedBackend b(make_rule_responder({}));
  cfg.rounds = 0;
  CHECK_THROWS_AS((void)run_simulation(cat_post(), complete_population(2, 0.5), cfg, b), ConfigError);
  cfg.rounds = 1;
  CHECK_THROWS_AS((void)run_simulation(cat_post(), Population{}, cfg, b), ConfigError);
}

TEST_CASE("feature extraction") {
  PropagationTrace t;
  t.complete = true;
  StepRecord s1;
  s1.step = 1;
  s1.m_num = 3.25;
  s1.opinions = {8, 8, 8};
  s1.actions = {{0, ActionKind::kLike, "p", {}}, {1, ActionKind::kLike, "p", {}}, {2, ActionKind::kReply, "p", "x"}};
  StepRecord s2 = s1;
  s2.step = 2;
  s2.m_num = 8.0;
  s2.m_text = "final";
  s2.actions = {{0, ActionKind::kLike, "p", {}}};
  t.steps = {s1, s2};
  const auto f = extract_features(t);
  CHECK(f.share_above_7_5 == 1.0);
  CHECK(f.action_histogram == std::array<std::size_t, 5>{0, 0, 1, 3, 0});
  CHECK(f.total_actions() == 4);
  CHECK(f.m_num_series == std::vector<double>{3.25, 8.0});
  CHECK(f.final_summary == "final");
}

TEST_CASE("m_num series mirrors the trace on random runs") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = RuntimeConfig::with_default_prompts();
    cfg.seed = seed;
    ScriptedBackend b(make_rule_responder({}));
    const auto trace = run_simulation(cat_post(), generated(60, seed), cfg, b);
    const auto f = extract_features(trace);
    REQUIRE(f.m_num_series.size() == trace.steps.size());
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
      CHECK(f.m_num_series[i] == trace.steps[i].m_num);
      CHECK(trace.steps[i].opinion_digest == opinion_digest(trace.steps[i].opinions));
    }
  }
}

TEST_CASE("trace files round-trip") {
  auto cfg = RuntimeConfig::with_default_prompts();
  cfg.config_digest = "abc";
  ScriptedBackend b(make_rule_responder({}));
  const auto trace = run_simulation(cat_post(), generated(40, 3), cfg, b);
  const auto text = serialize_trace(trace);
  std::istringstream in(text);
  const auto back = parse_trace(in);
  CHECK(back.complete);
  CHECK(back.config_digest == "abc");
  CHECK(back.steps == trace.steps);
  CHECK(serialize_trace(back) == text);

  const auto cut = text.substr(0, text.rfind("{\"kind\":\"end\""));
  std::istringstream partial(cut);
  CHECK_FALSE(parse_trace(partial).complete);

  std::string gap = text;
  const auto pos = gap.find("\"step\":2");
  REQUIRE(pos != std::string::npos);
  gap.replace(pos, 8, "\"step\":5");
  std::istringstream bad(gap);
  CHECK_THROWS_AS(parse_trace(bad), DataIntegrityError);

  std::istringstream junk("not json\n");
  CHECK_THROWS_AS(parse_trace(junk), DataIntegrityError);
}

TEST_CASE("trace writer streams the same bytes") {
  const auto dir = testing::scratch_dir("writer");
  auto cfg = RuntimeConfig::with_default_prompts();
  ScriptedBackend b(make_rule_responder({}));
  PropagationTrace meta;
  meta.post_id = "p1";
  meta.n_agents = 30;
  meta.rounds = cfg.rounds;
  meta.seed = cfg.seed;
  const auto path = dir / "t.jsonl";
  PropagationTrace trace;
  {
    TraceWriter w(path, meta);
    trace = run_simulation(cat_post(), generated(30, 2), cfg, b, [&](const StepRecord& s) { w.append(s); });
    w.finish(trace);
  }
  CHECK(testing::slurp(path) == serialize_trace(trace));
  CHECK(read_trace(path).steps == trace.steps);
}

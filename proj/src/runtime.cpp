#include "ugcsim/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "ugcsim/digest.hpp"
#include "ugcsim/error.hpp"
#include "ugcsim/text.hpp"

namespace ugcsim {

std::string_view to_string(SimMode mode) {
  return mode == SimMode::kSmf ? "smf" : "standard";
}

SimMode parse_sim_mode(std::string_view s) {
  const auto v = text::to_lower(s);
  if (v == "smf") return SimMode::kSmf;
  if (v == "standard" || v == "standardsim" || v == "sim") return SimMode::kStandard;
  throw ConfigError("expected smf or standard, got '" + std::string(s) + "'", "mode");
}

DecisionPrompts DecisionPrompts::load_default() {
  const auto dir = std::filesystem::path(UGCSIM_DATA_DIR) / "prompts";
  return {PromptTemplate::load(dir / "decision_smf.v1.txt"),
          PromptTemplate::load(dir / "decision_standard.v1.txt")};
}

RuntimeConfig RuntimeConfig::with_default_prompts() {
  RuntimeConfig cfg;
  cfg.summarizer = SummarizerConfig::load_default();
  cfg.prompts = DecisionPrompts::load_default();
  return cfg;
}

std::size_t PropagationFeatures::total_actions() const {
  std::size_t n = 0;
  for (auto c : action_histogram) n += c;
  return n;
}

std::string action_menu() {
  return "- post: share original content about this post with your followers\n"
         "- retweet: forward the post to your followers\n"
         "- reply: respond to the post with a comment\n"
         "- like: endorse the post\n"
         "- do_nothing: stay silent";
}

namespace {

std::string render_memory(const std::deque<MemoryEntry>& memory, std::size_t k) {
  if (memory.empty() || k == 0) return "(no prior interactions)";
  const std::size_t start = memory.size() > k ? memory.size() - k : 0;
  std::string out;
  for (std::size_t i = start; i < memory.size(); ++i) {
    const auto& m = memory[i];
    if (!out.empty()) out += '\n';
    out += fmt::format("- [step {}] ({}) {}", m.step, to_string(m.kind), m.content);
  }
  return out;
}

std::string image_text(const UgcPost& post) {
  return post.image_ref && !post.image_ref->empty() ? text::collapse_whitespace(*post.image_ref)
                                                    : std::string("(no image)");
}

}  // namespace

std::string build_decision_prompt(const AgentState& agent, const UgcPost& post,
                                  const MeanFieldState& mf,
                                  const std::deque<MemoryEntry>& memory,
                                  const RuntimeConfig& cfg,
                                  const std::string& neighbor_feed) {
  std::map<std::string, std::string> v;
  v["name"] = agent.persona.name;
  v["gender"] = std::string(to_string(agent.persona.gender));
  v["occupation"] = agent.persona.occupation;
  v["interests"] = text::join(agent.persona.interests, ", ");
  v["personality"] = text::join(agent.persona.personality, ", ");
  v["opinion"] = agent.exposed ? text::format_number(agent.opinion, 2)
                               : std::string("not formed yet (first time seeing this post)");
  v["memory"] = render_memory(memory, cfg.memory_prompt_k);
  v["post_id"] = post.id;
  v["ugc_text"] = text::collapse_whitespace(post.text);
  v["image"] = image_text(post);
  v["action_menu"] = action_menu();
  if (cfg.mode == SimMode::kSmf) {
    v["mf_text"] = mf.text.summary.empty() ? std::string(kNoActivitySentinel) : mf.text.summary;
    v["mf_num"] = text::format_number(mf.numeric, 2);
    return cfg.prompts.smf.render(v);
  }
  v["neighbor_actions"] =
      neighbor_feed.empty() ? std::string("(you have no connections on the network)")
                            : neighbor_feed;
  return cfg.prompts.standard.render(v);
}

std::optional<DecisionOutcome> parse_decision(std::string_view response, AgentId agent,
                                              const std::string& default_target) {
  std::optional<ActionKind> kind;
  std::optional<double> opinion;
  std::optional<std::string> content, target;
  bool bad_action = false;
  std::istringstream in{std::string(response)};
  std::string raw;
  while (std::getline(in, raw)) {
    std::string line = text::trim(raw);
    // Tolerate markdown emphasis around the field names.
    line.erase(std::remove(line.begin(), line.end(), '*'), line.end());
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = text::to_lower(text::trim(line.substr(0, colon)));
    const std::string value = text::trim(line.substr(colon + 1));
    if (key == "action") {
      kind = parse_action_kind(value);
      if (!kind) bad_action = true;
    } else if (key == "opinion") {
      const char* b = value.c_str();
      char* end = nullptr;
      const double x = std::strtod(b, &end);
      if (end != b && std::isfinite(x)) opinion = x;
    } else if (key == "content") {
      if (!value.empty()) content = value;
    } else if (key == "target") {
      if (!value.empty()) target = value;
    }
  }
  if (bad_action || !opinion) return std::nullopt;
  DecisionOutcome out;
  out.action.agent_id = agent;
  out.action.kind = kind.value_or(ActionKind::kDoNothing);
  out.new_opinion = std::clamp(*opinion, kOpinionMin, kOpinionMax);
  switch (out.action.kind) {
    case ActionKind::kPost:
      out.action.content = content;
      break;
    case ActionKind::kReply:
      out.action.content = content;
      out.action.target = target.value_or(default_target);
      break;
    case ActionKind::kRetweet:
      out.action.content = content;
      out.action.target = target.value_or(default_target);
      break;
    case ActionKind::kLike:
      out.action.target = target.value_or(default_target);
      break;
    case ActionKind::kDoNothing:
      break;
  }
  try {
    validate_action(out.action);
  } catch (const ValidationError&) {
    return std::nullopt;
  }
  return out;
}

DecisionResult decide(ChatBackend& backend, const std::string& prompt, const AgentState& agent,
                      const std::string& post_id) {
  auto first = backend.complete(ChatRequest::user(prompt, CallSite::kDecision));
  if (auto parsed = parse_decision(first.text, agent.id, post_id)) return {*parsed, false, {}};
  auto second = backend.complete(
      ChatRequest::user(prompt + std::string(kFormatReminder), CallSite::kDecision));
  if (auto parsed = parse_decision(second.text, agent.id, post_id)) return {*parsed, false, {}};
  DecisionResult r;
  r.outcome.action = AgentAction{agent.id, ActionKind::kDoNothing, std::nullopt, std::nullopt};
  r.outcome.new_opinion = agent.opinion;
  r.fell_back = true;
  r.warning = fmt::format("agent {}: unparseable decision after reprompt; kept opinion {}",
                          agent.id, text::format_number(agent.opinion, 4));
  return r;
}

std::string opinion_digest(std::span<const double> opinions) {
  std::string buf;
  buf.reserve(opinions.size() * 24);
  for (double o : opinions) {
    buf += fmt::format("{}", o);  // shortest round-trip form
    buf += ',';
  }
  return sha256_hex(buf);
}

namespace {

struct FeedLine {
  int step;
  AgentId agent;
  std::string text;
};

// Every neighbour in either direction, with its state and full action history.
std::string build_feed(const std::vector<AgentState>& agents, const SocialGraph& graph, AgentId i,
                       const std::vector<std::vector<FeedLine>>& history) {
  std::vector<AgentId> nbrs(graph.followees(i).begin(), graph.followees(i).end());
  nbrs.insert(nbrs.end(), graph.followers(i).begin(), graph.followers(i).end());
  std::sort(nbrs.begin(), nbrs.end());
  nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  std::string out;
  for (AgentId j : nbrs) {
    const auto& nb = agents[j];
    if (!out.empty()) out += '\n';
    if (!nb.exposed) {
      out += fmt::format("- {} has not seen the post yet.", nb.persona.name);
      continue;
    }
    out += fmt::format("- {} (opinion {}):", nb.persona.name, text::format_number(nb.opinion, 2));
    for (const auto& l : history[j]) {
      out += fmt::format("\n  - [{}] {}", action_ref(l.step, l.agent), l.text);
    }
  }
  return out;
}

}  // namespace

PropagationTrace run_simulation(const UgcPost& post, Population population,
                                const RuntimeConfig& cfg, ChatBackend& backend,
                                const StepObserver& observer) {
  if (cfg.rounds < 1) throw ConfigError("must be >= 1", "rounds");
  if (population.agents.empty()) throw ConfigError("population is empty", "n_agents");
  if (population.graph.size() != population.agents.size()) {
    throw ValidationError("graph size does not match population");
  }
  cfg.dynamics.validate();

  auto& agents = population.agents;
  const auto& graph = population.graph;
  const std::size_t n = agents.size();

  PropagationTrace trace;
  trace.post_id = post.id;
  trace.n_agents = n;
  trace.rounds = cfg.rounds;
  trace.seed = cfg.seed;
  trace.mode = cfg.mode;
  trace.config_digest = cfg.config_digest;

  std::vector<double> base_probs(n);
  for (std::size_t i = 0; i < n; ++i) base_probs[i] = activation_probability(agents[i], post);

  MeanFieldState mf;
  {
    std::vector<double> o(n);
    for (std::size_t i = 0; i < n; ++i) o[i] = agents[i].opinion;
    mf.numeric = numeric_mean_field(o);
  }
  std::vector<std::uint8_t> frontier(n, 0);
  std::vector<std::vector<FeedLine>> history(n);

  for (int t = 1; t <= static_cast<int>(cfg.rounds); ++t) {
    StepRecord rec;
    rec.step = t;

    // (1) activation
    std::vector<double> probs(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = base_probs[i];
      // A retweet by a followee is a second, independent chance to engage.
      probs[i] = frontier[i] ? 1.0 - (1.0 - p) * (1.0 - p) : p;
    }
    rec.activated = sample_activated(probs, cfg.seed, static_cast<std::uint64_t>(t));
    std::fill(frontier.begin(), frontier.end(), 0);
    for (auto& a : agents) a.activated = false;
    for (AgentId i : rec.activated) agents[i].activated = true;

    // (2)+(3) prompts from the start-of-step snapshot, decisions in parallel
    const std::size_t k = rec.activated.size();
    std::vector<std::string> prompts(k);
    for (std::size_t idx = 0; idx < k; ++idx) {
      const auto& a = agents[rec.activated[idx]];
      const std::string feed =
          cfg.mode == SimMode::kStandard ? build_feed(agents, graph, a.id, history) : std::string{};
      prompts[idx] = build_decision_prompt(a, post, mf, a.memory.entries(), cfg, feed);
    }
    std::vector<DecisionResult> results(k);
    std::vector<std::exception_ptr> errors(k);
    {
      std::atomic<std::size_t> next{0};
      auto worker = [&] {
        for (std::size_t idx = next++; idx < k; idx = next++) {
          try {
            results[idx] = decide(backend, prompts[idx], agents[rec.activated[idx]], post.id);
          } catch (...) {
            errors[idx] = std::current_exception();
          }
        }
      };
      const std::size_t threads = std::min(std::max<std::size_t>(cfg.concurrency, 1), k);
      if (threads <= 1) {
        worker();
      } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
      }
    }
    try {
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    } catch (const BackendError& e) {
      trace.error = fmt::format("step {}: {}", t, e.what());
      return trace;
    }

    // (4) apply in ascending agent id
    std::vector<std::string> action_texts;
    for (std::size_t idx = 0; idx < k; ++idx) {
      auto& a = agents[rec.activated[idx]];
      const auto& r = results[idx];
      if (r.fell_back) rec.warnings.push_back(r.warning);
      const bool first_exposure = !a.exposed;
      a.exposed = true;
      a.opinion = r.outcome.new_opinion;
      if (first_exposure) {
        a.memory.push({t, MemoryKind::kReceivedUgc,
                       fmt::format("Saw post {}: \"{}\"", post.id,
                                   text::truncate_utf8(text::collapse_whitespace(post.text), 160))});
      }
      if (cfg.mode == SimMode::kSmf) {
        a.memory.push({t, MemoryKind::kObservedMeanField,
                       fmt::format("Network average opinion {}; {}",
                                   text::format_number(mf.numeric, 2),
                                   text::truncate_utf8(mf.text.summary.empty()
                                                           ? std::string(kNoActivitySentinel)
                                                           : mf.text.summary,
                                                       160))});
      }
      const AgentAction& act = r.outcome.action;
      rec.actions.push_back(act);
      if (act.kind == ActionKind::kDoNothing) {
        history[a.id].push_back({t, a.id, a.persona.name + " saw the post and did not engage."});
        continue;
      }
      const std::string sentence = textualize_action(act, a.persona.name);
      action_texts.push_back(sentence);
      history[a.id].push_back({t, a.id, sentence});
      a.memory.push({t, MemoryKind::kOwnAction, textualize_action(act, "You")});
      if (act.kind == ActionKind::kRetweet) {
        for (AgentId f : graph.followers(a.id)) frontier[f] = 1;
      }
      if ((act.kind == ActionKind::kLike || act.kind == ActionKind::kReply) && act.target) {
        if (auto ref = parse_action_ref(*act.target);
            ref && ref->second < n && ref->second != a.id) {
          agents[ref->second].memory.push({t, MemoryKind::kReceivedUgc, sentence});
        }
      }
    }

    // (5) bounded-confidence update over exposed agents
    std::vector<double> opinions(n), weights(n);
    std::vector<std::uint8_t> exposed(n);
    for (std::size_t i = 0; i < n; ++i) {
      opinions[i] = agents[i].opinion;
      agents[i].influence_weight =
          agents[i].activated ? cfg.dynamics.alpha_active : cfg.dynamics.alpha_inactive;
      weights[i] = agents[i].influence_weight;
      exposed[i] = agents[i].exposed ? 1 : 0;
    }
    OpinionVector next = deffuant_step(opinions, graph, weights, cfg.dynamics, exposed);
    for (std::size_t i = 0; i < n; ++i) agents[i].opinion = next[i];

    // (6) mean fields
    if (cfg.mode == SimMode::kSmf) {
      try {
        mf.text = summarize_mean_field(action_texts, mf.text, t, post.text, backend,
                                       cfg.summarizer);
      } catch (const BackendError& e) {
        trace.error = fmt::format("step {}: summary failed: {}", t, e.what());
        return trace;
      }
    } else {
      mf.text = {std::string{}, t};
    }
    mf.numeric = numeric_mean_field(next);

    // (7) record
    rec.m_num = mf.numeric;
    rec.m_text = mf.text.summary;
    rec.opinion_digest = opinion_digest(next);
    rec.opinions = std::move(next);
    if (observer) observer(rec);
    trace.steps.push_back(std::move(rec));
  }
  trace.complete = true;
  return trace;
}

PropagationFeatures extract_features(const PropagationTrace& trace) {
  if (!trace.complete) {
    throw DataIntegrityError("trace for post '" + trace.post_id + "' is incomplete");
  }
  if (trace.steps.empty()) throw DataIntegrityError("trace has no steps");
  PropagationFeatures f;
  for (const auto& s : trace.steps) {
    f.m_num_series.push_back(s.m_num);
    for (const auto& a : s.actions) ++f.action_histogram[static_cast<std::size_t>(a.kind)];
  }
  f.final_summary = trace.steps.back().m_text;
  const auto& last = trace.steps.back().opinions;
  if (!last.empty()) {
    const auto high = std::count_if(last.begin(), last.end(), [](double o) { return o > 7.5; });
    f.share_above_7_5 = static_cast<double>(high) / static_cast<double>(last.size());
  }
  return f;
}

}  // namespace ugcsim

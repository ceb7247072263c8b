#include "ugcsim/llm_backend.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "ugcsim/digest.hpp"
#include "ugcsim/error.hpp"
#include "ugcsim/text.hpp"

namespace ugcsim {

using nlohmann::json;

std::string_view to_string(CallSite site) {
  switch (site) {
    case CallSite::kDecision: return "decision";
    case CallSite::kSummary: return "summary";
    case CallSite::kPrediction: return "prediction";
    case CallSite::kOther: return "other";
  }
  return "other";
}

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kHttp: return "http";
    case BackendKind::kScripted: return "scripted";
    case BackendKind::kCachedReplay: return "replay";
    case BackendKind::kCaching: return "caching";
  }
  return "scripted";
}

ChatRequest ChatRequest::user(std::string content, CallSite site) {
  ChatRequest r;
  r.messages.push_back({"user", std::move(content)});
  r.site = site;
  return r;
}

void SiteUsage::add(const CallUsage& c) {
  ++calls;
  prompt_tokens += c.prompt_tokens;
  completion_tokens += c.completion_tokens;
  retries += static_cast<std::size_t>(c.retries);
  wall_seconds += c.seconds;
}

const SiteUsage& UsageReport::site(CallSite s) const {
  static const SiteUsage kEmpty{};
  const auto it = by_site.find(s);
  return it == by_site.end() ? kEmpty : it->second;
}

std::size_t estimate_prompt_tokens(const ChatRequest& req) {
  std::size_t n = 0;
  for (const auto& m : req.messages) n += text::whitespace_token_count(m.content);
  return n;
}

// --- ChatBackend -------------------------------------------------------------

ChatBackend::ChatBackend(BackendSettings settings) : settings_(std::move(settings)) {
  if (settings_.max_retries < 0) throw ConfigError("must be >= 0", "backend.max_retries");
  if (settings_.concurrency_limit == 0) settings_.concurrency_limit = 1;
}

std::string ChatBackend::resolved_model(const ChatRequest& req) const {
  return req.model.value_or(settings_.model);
}

double ChatBackend::resolved_temperature(const ChatRequest& req) const {
  return req.temperature.value_or(settings_.temperature);
}

ChatResponse ChatBackend::complete(const ChatRequest& req) {
  {
    std::unique_lock lock(gate_mu_);
    gate_cv_.wait(lock, [&] { return in_flight_ < settings_.concurrency_limit; });
    ++in_flight_;
  }
  struct Release {
    ChatBackend* self;
    ~Release() {
      {
        std::lock_guard lock(self->gate_mu_);
        --self->in_flight_;
      }
      self->gate_cv_.notify_one();
    }
  } release{this};

  const auto start = std::chrono::steady_clock::now();
  ChatResponse resp = do_complete(req);
  const auto elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CallUsage c{req.site, resp.usage.prompt_tokens, resp.usage.completion_tokens,
              resp.retries, elapsed};
  std::lock_guard lock(usage_mu_);
  log_.push_back(c);
  return resp;
}

UsageReport ChatBackend::usage_report() const {
  UsageReport r;
  {
    std::lock_guard lock(usage_mu_);
    for (const auto& c : log_) {
      r.total.add(c);
      r.by_site[c.site].add(c);
    }
  }
  r.network_calls = network_calls();
  return r;
}

std::vector<CallUsage> ChatBackend::call_log() const {
  std::lock_guard lock(usage_mu_);
  return log_;
}

void ChatBackend::reset_usage() {
  std::lock_guard lock(usage_mu_);
  log_.clear();
}

// --- Scripted ----------------------------------------------------------------

ScriptedBackend::ScriptedBackend(Responder responder, BackendSettings settings)
    : ChatBackend(std::move(settings)), responder_(std::move(responder)) {
  if (!responder_) throw ConfigError("scripted backend needs a responder", "backend");
}

ChatResponse ScriptedBackend::do_complete(const ChatRequest& req) {
  ChatResponse r;
  r.text = responder_(req);
  r.usage.prompt_tokens = estimate_prompt_tokens(req);
  r.usage.completion_tokens = text::whitespace_token_count(r.text);
  r.usage.estimated = true;
  return r;
}

std::vector<DecisionRule> parse_decision_rules(std::string_view source) {
  std::vector<DecisionRule> rules;
  std::string s(source);
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    item = text::trim(item);
    if (item.empty()) continue;
    DecisionRule r;
    const auto a = item.find(':');
    const auto b = a == std::string::npos ? a : item.find(':', a + 1);
    if (b == std::string::npos) {
      throw ConfigError("rule '" + item + "' is not overlap:opinion:action", "scripted.rules");
    }
    try {
      r.min_overlap = static_cast<std::size_t>(std::stoul(item.substr(0, a)));
      r.opinion = std::stod(item.substr(a + 1, b - a - 1));
    } catch (const std::exception&) {
      throw ConfigError("rule '" + item + "' has a non-numeric field", "scripted.rules");
    }
    r.action = text::to_lower(text::trim(item.substr(b + 1)));
    static const std::set<std::string> kActions = {"post", "retweet", "reply", "like",
                                                   "do_nothing"};
    if (!kActions.count(r.action)) {
      throw ConfigError("rule '" + item + "' names an unknown action", "scripted.rules");
    }
    rules.push_back(r);
  }
  if (rules.empty()) throw ConfigError("no rules given", "scripted.rules");
  return rules;
}

std::string format_decision_rules(const std::vector<DecisionRule>& rules) {
  std::vector<std::string> parts;
  for (const auto& r : rules) {
    parts.push_back(fmt::format("{}:{}:{}", r.min_overlap, text::format_number(r.opinion, 6),
                                r.action));
  }
  return text::join(parts, ";");
}

namespace {

std::string all_content(const ChatRequest& req) {
  std::string s;
  for (const auto& m : req.messages) {
    s += m.content;
    s += '\n';
  }
  return s;
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

std::string field_after(const std::vector<std::string>& lines, std::string_view prefix) {
  for (const auto& l : lines) {
    if (l.rfind(prefix, 0) == 0) return text::trim(l.substr(prefix.size()));
  }
  return {};
}

std::string task_of(const std::vector<std::string>& lines) {
  return text::to_lower(field_after(lines, "#task:"));
}

std::string respond_decision(const ScriptedRules& rules,
                             const std::vector<std::string>& lines) {
  std::set<std::string> interests;
  for (const auto& t : text::tokenize(field_after(lines, "Interests:"))) interests.insert(t);
  std::set<std::string> post_tokens;
  for (const auto& t : text::tokenize(field_after(lines, "Post text:"))) post_tokens.insert(t);
  std::vector<std::string> matched;
  for (const auto& t : interests) {
    if (post_tokens.count(t)) matched.push_back(t);
  }
  const DecisionRule* chosen = nullptr;
  for (const auto& r : rules.decision) {
    if (matched.size() >= r.min_overlap) {
      chosen = &r;
      break;
    }
  }
  if (!chosen) return "ACTION: do_nothing\nOPINION: 0\n";
  std::string out = fmt::format("ACTION: {}\nOPINION: {}\n", chosen->action,
                                text::format_number(chosen->opinion, 6));
  if (chosen->action == "post" || chosen->action == "reply" ||
      chosen->action == "retweet") {
    const std::string topic = matched.empty() ? "this" : text::join(matched, " and ");
    out += fmt::format("CONTENT: Anyone who cares about {} should see this post.\n", topic);
  }
  return out;
}

std::string respond_summary(const std::vector<std::string>& lines) {
  bool in_block = false;
  std::map<std::string, std::size_t> verbs;
  std::size_t n = 0;
  for (const auto& l : lines) {
    if (l.rfind("Actions this step:", 0) == 0) {
      in_block = true;
      continue;
    }
    if (l.rfind("End of actions.", 0) == 0) break;
    if (!in_block || l.rfind("- ", 0) != 0) continue;
    ++n;
    for (const char* verb : {"posted", "retweeted", "replied", "liked"}) {
      if (l.find(verb) != std::string::npos) {
        ++verbs[verb];
        break;
      }
    }
  }
  std::vector<std::string> parts;
  for (const auto& [verb, count] : verbs) parts.push_back(fmt::format("{} {}", count, verb));
  return fmt::format("Step summary: {} action{} observed ({}). Engagement is {}.", n,
                     n == 1 ? "" : "s", text::join(parts, ", "),
                     n >= 3 ? "spreading" : "limited");
}

std::string respond_prediction(const ScriptedRules& rules, const std::string& content) {
  static const std::regex kMean(R"(final mean opinion (-?[0-9]+(?:\.[0-9]+)?))");
  std::smatch m;
  double mean = 0.0;
  if (std::regex_search(content, m, kMean)) mean = std::stod(m[1].str());
  return fmt::format("SCORE: {}\n",
                     text::format_number(rules.score_base + rules.score_slope * mean, 6));
}

}  // namespace

Responder make_rule_responder(ScriptedRules rules) {
  std::stable_sort(rules.decision.begin(), rules.decision.end(),
                   [](const DecisionRule& a, const DecisionRule& b) {
                     return a.min_overlap > b.min_overlap;
                   });
  return [rules = std::move(rules)](const ChatRequest& req) -> std::string {
    const std::string content = all_content(req);
    const auto lines = lines_of(content);
    const std::string task = task_of(lines);
    if (task == "decision") return respond_decision(rules, lines);
    if (task == "summarize") return respond_summary(lines);
    if (task == "predict") return respond_prediction(rules, content);
    return "OK";
  };
}

// --- Cache -------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw ConfigError("cannot create cache directory " + dir_.string(), "backend.cache_dir");
}

std::string ResponseCache::key_for(const ChatRequest& req, const std::string& model,
                                   double temperature) {
  json j;
  j["model"] = model;
  j["temperature"] = temperature;
  j["messages"] = json::array();
  for (const auto& m : req.messages) {
    j["messages"].push_back({{"role", m.role}, {"content", text::collapse_whitespace(m.content)}});
  }
  return sha256_hex(j.dump());
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<ChatResponse> ResponseCache::get(const std::string& key) const {
  std::ifstream in(path_for(key));
  if (!in) return std::nullopt;
  try {
    const auto j = json::parse(in);
    ChatResponse r;
    r.text = j.at("text").get<std::string>();
    r.usage.prompt_tokens = j.value("prompt_tokens", std::size_t{0});
    r.usage.completion_tokens = j.value("completion_tokens", std::size_t{0});
    r.usage.estimated = j.value("estimated", false);
    r.from_cache = true;
    return r;
  } catch (const json::exception& e) {
    throw DataIntegrityError("corrupt cache entry " + key + ": " + e.what());
  }
}

void ResponseCache::put(const std::string& key, const ChatResponse& resp) const {
  const auto path = path_for(key);
  std::filesystem::create_directories(path.parent_path());
  json j = {{"key", key},
            {"text", resp.text},
            {"prompt_tokens", resp.usage.prompt_tokens},
            {"completion_tokens", resp.usage.completion_tokens},
            {"estimated", resp.usage.estimated}};
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw BackendError("cannot write cache entry " + tmp.string());
    out << j.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

CachingBackend::CachingBackend(std::unique_ptr<ChatBackend> inner, std::filesystem::path dir)
    : ChatBackend(inner ? inner->settings() : BackendSettings{}),
      inner_(std::move(inner)),
      cache_(std::move(dir)) {
  if (!inner_) throw ConfigError("caching backend needs an inner backend", "backend");
}

ChatResponse CachingBackend::do_complete(const ChatRequest& req) {
  const auto key = ResponseCache::key_for(req, inner_->resolved_model(req),
                                          inner_->resolved_temperature(req));
  std::shared_ptr<std::mutex> key_lock;
  {
    std::lock_guard lock(keys_mu_);
    auto& slot = key_locks_[key];
    if (!slot) slot = std::make_shared<std::mutex>();
    key_lock = slot;
  }
  std::lock_guard lock(*key_lock);
  if (auto hit = cache_.get(key)) return *hit;
  ChatResponse resp = inner_->complete(req);
  cache_.put(key, resp);
  return resp;
}

std::size_t CachingBackend::network_calls() const {
  return inner_->usage_report().network_calls;
}

CachedReplayBackend::CachedReplayBackend(std::filesystem::path dir, BackendSettings settings)
    : ChatBackend(std::move(settings)), cache_(std::move(dir)) {}

ChatResponse CachedReplayBackend::do_complete(const ChatRequest& req) {
  const auto key = ResponseCache::key_for(req, resolved_model(req), resolved_temperature(req));
  if (auto hit = cache_.get(key)) return *hit;
  throw CacheMissError("no cached response for request " + key);
}

}  // namespace ugcsim

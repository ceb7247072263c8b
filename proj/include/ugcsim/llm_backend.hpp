#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ugcsim {

/// Which part of the pipeline issued a request; usage is grouped by it.
enum class CallSite { kDecision, kSummary, kPrediction, kOther };

std::string_view to_string(CallSite site);

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  CallSite site = CallSite::kOther;
  /// Overrides of the backend defaults.
  std::optional<std::string> model;
  std::optional<double> temperature;

  static ChatRequest user(std::string content, CallSite site);
};

struct Usage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  /// True when counts come from the whitespace approximation.
  bool estimated = false;
};

struct ChatResponse {
  std::string text;
  Usage usage;
  int retries = 0;
  bool from_cache = false;
};

enum class BackendKind { kHttp, kScripted, kCachedReplay, kCaching };

std::string_view to_string(BackendKind kind);

struct BackendSettings {
  std::string model = "scripted";
  double temperature = 1.0;
  int max_retries = 3;
  std::size_t concurrency_limit = 4;
};

struct CallUsage {
  CallSite site = CallSite::kOther;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  int retries = 0;
  double seconds = 0.0;
};

struct SiteUsage {
  std::size_t calls = 0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  std::size_t retries = 0;
  double wall_seconds = 0.0;

  void add(const CallUsage& c);
};

struct UsageReport {
  SiteUsage total;
  std::map<CallSite, SiteUsage> by_site;
  /// Requests that actually reached a remote endpoint.
  std::size_t network_calls = 0;

  const SiteUsage& site(CallSite s) const;
};

/// Prompt-token estimate used when an endpoint omits usage counters.
std::size_t estimate_prompt_tokens(const ChatRequest& req);

/// Chat-completion backend. `complete` applies the concurrency gate and
/// records usage; subclasses implement the transport in `do_complete`.
class ChatBackend {
 public:
  explicit ChatBackend(BackendSettings settings);
  virtual ~ChatBackend() = default;
  ChatBackend(const ChatBackend&) = delete;
  ChatBackend& operator=(const ChatBackend&) = delete;

  ChatResponse complete(const ChatRequest& req);

  UsageReport usage_report() const;
  std::vector<CallUsage> call_log() const;
  void reset_usage();

  const BackendSettings& settings() const { return settings_; }
  virtual BackendKind kind() const = 0;

  std::string resolved_model(const ChatRequest& req) const;
  double resolved_temperature(const ChatRequest& req) const;

 protected:
  virtual ChatResponse do_complete(const ChatRequest& req) = 0;
  virtual std::size_t network_calls() const { return 0; }

 private:
  BackendSettings settings_;
  mutable std::mutex usage_mu_;
  std::vector<CallUsage> log_;

  std::mutex gate_mu_;
  std::condition_variable gate_cv_;
  std::size_t in_flight_ = 0;
};

// --- Scripted ----------------------------------------------------------------

using Responder = std::function<std::string(const ChatRequest&)>;

/// Deterministic stand-in for an LLM; `responder` must be a pure function of
/// the request.
class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(Responder responder, BackendSettings settings = {});
  BackendKind kind() const override { return BackendKind::kScripted; }

 protected:
  ChatResponse do_complete(const ChatRequest& req) override;

 private:
  Responder responder_;
};

/// "overlap >= min_overlap -> opinion, action". First matching rule wins
/// after sorting by descending min_overlap.
struct DecisionRule {
  std::size_t min_overlap = 0;
  double opinion = 5.0;
  std::string action = "do_nothing";
};

struct ScriptedRules {
  std::vector<DecisionRule> decision = {
      {2, 9.0, "reply"}, {1, 8.0, "like"}, {0, 2.0, "do_nothing"}};
  /// Prediction score = score_base + score_slope * final mean opinion.
  double score_base = 1.0;
  double score_slope = 1.0;
};

/// Parses "2:9:reply;1:8:like;0:2:do_nothing".
std::vector<DecisionRule> parse_decision_rules(std::string_view source);
std::string format_decision_rules(const std::vector<DecisionRule>& rules);

/// Responder that understands the shipped decision, summary and prediction
/// prompts (recognized by their `#task:` line).
Responder make_rule_responder(ScriptedRules rules);

// --- HTTP ----------------------------------------------------------------------

struct HttpSettings {
  /// e.g. "http://127.0.0.1:8000/v1"; requests go to {base_url}/chat/completions.
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string api_key;
  double timeout_seconds = 60.0;
  double backoff_base_ms = 500.0;
  std::uint64_t jitter_seed = 1;
};

/// Delay before retry k (k = 0 .. max_retries-1):
///   base * 2^k * (1 + u_k / 2), u_k in [0, 1)
/// which is strictly increasing in k for any jitter draw.
std::vector<double> backoff_schedule(double base_ms, int max_retries,
                                     std::uint64_t jitter_seed,
                                     std::uint64_t call_index);

class HttpBackend : public ChatBackend {
 public:
  HttpBackend(HttpSettings http, BackendSettings settings);
  BackendKind kind() const override { return BackendKind::kHttp; }

  /// Total sleep intervals taken so far, in call order.
  std::vector<double> observed_delays_ms() const;

 protected:
  ChatResponse do_complete(const ChatRequest& req) override;
  std::size_t network_calls() const override;

 private:
  HttpSettings http_;
  std::string host_;
  std::string path_;
  mutable std::mutex mu_;
  std::uint64_t call_counter_ = 0;
  std::size_t network_calls_ = 0;
  std::vector<double> delays_;
};

// --- Cache -----------------------------------------------------------------

/// Content-addressed response store: one JSON file per request digest.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  /// Digest of (normalized messages, model, temperature). Normalization trims
  /// and collapses whitespace in every message.
  static std::string key_for(const ChatRequest& req, const std::string& model,
                             double temperature);

  std::optional<ChatResponse> get(const std::string& key) const;
  void put(const std::string& key, const ChatResponse& resp) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;
  std::filesystem::path dir_;
};

/// Read-through cache in front of another backend. Concurrent identical
/// requests are collapsed onto one upstream call.
class CachingBackend : public ChatBackend {
 public:
  CachingBackend(std::unique_ptr<ChatBackend> inner, std::filesystem::path dir);
  BackendKind kind() const override { return BackendKind::kCaching; }
  ChatBackend& inner() { return *inner_; }

 protected:
  ChatResponse do_complete(const ChatRequest& req) override;
  std::size_t network_calls() const override;

 private:
  std::unique_ptr<ChatBackend> inner_;
  ResponseCache cache_;
  std::mutex keys_mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> key_locks_;
};

/// Serves only cached responses; a miss is an error.
class CachedReplayBackend : public ChatBackend {
 public:
  CachedReplayBackend(std::filesystem::path dir, BackendSettings settings);
  BackendKind kind() const override { return BackendKind::kCachedReplay; }

 protected:
  ChatResponse do_complete(const ChatRequest& req) override;

 private:
  ResponseCache cache_;
};

}  // namespace ugcsim

#include "ugcsim/meanfield_text.hpp"

#include <charconv>
#include <filesystem>

#include <fmt/format.h>

#include "ugcsim/error.hpp"
#include "ugcsim/text.hpp"

namespace ugcsim {

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::kPost: return "post";
    case ActionKind::kRetweet: return "retweet";
    case ActionKind::kReply: return "reply";
    case ActionKind::kLike: return "like";
    case ActionKind::kDoNothing: return "do_nothing";
  }
  return "do_nothing";
}

std::optional<ActionKind> parse_action_kind(std::string_view s) {
  const std::string v = text::to_lower(text::trim(s));
  if (v == "post") return ActionKind::kPost;
  if (v == "retweet") return ActionKind::kRetweet;
  if (v == "reply") return ActionKind::kReply;
  if (v == "like") return ActionKind::kLike;
  if (v == "do_nothing" || v == "do nothing" || v == "nothing" || v == "none") {
    return ActionKind::kDoNothing;
  }
  return std::nullopt;
}

void validate_action(const AgentAction& a) {
  const bool has_target = a.target && !a.target->empty();
  const bool has_content = a.content && !a.content->empty();
  switch (a.kind) {
    case ActionKind::kPost:
      if (!has_content) throw ValidationError("post action needs content");
      break;
    case ActionKind::kReply:
      if (!has_target) throw ValidationError("reply action needs a target");
      if (!has_content) throw ValidationError("reply action needs content");
      break;
    case ActionKind::kRetweet:
    case ActionKind::kLike:
      if (!has_target) {
        throw ValidationError(std::string(to_string(a.kind)) + " action needs a target");
      }
      break;
    case ActionKind::kDoNothing:
      if (has_target || has_content) {
        throw ValidationError("do_nothing action carries no target or content");
      }
      break;
  }
}

std::string action_ref(int step, AgentId agent) { return fmt::format("s{}-a{}", step, agent); }

std::optional<std::pair<int, AgentId>> parse_action_ref(std::string_view ref) {
  if (ref.size() < 5 || ref[0] != 's') return std::nullopt;
  const auto dash = ref.find("-a");
  if (dash == std::string_view::npos) return std::nullopt;
  int step = 0;
  AgentId agent = 0;
  const auto* b = ref.data();
  auto r1 = std::from_chars(b + 1, b + dash, step);
  if (r1.ec != std::errc{} || r1.ptr != b + dash) return std::nullopt;
  auto r2 = std::from_chars(b + dash + 2, b + ref.size(), agent);
  if (r2.ec != std::errc{} || r2.ptr != b + ref.size()) return std::nullopt;
  return std::make_pair(step, agent);
}

std::string textualize_action(const AgentAction& a, std::string_view name) {
  validate_action(a);
  switch (a.kind) {
    case ActionKind::kPost:
      return fmt::format("{} posted: \"{}\"", name, *a.content);
    case ActionKind::kRetweet:
      if (a.content && !a.content->empty()) {
        return fmt::format("{} retweeted post {} with comment: \"{}\"", name, *a.target,
                           *a.content);
      }
      return fmt::format("{} retweeted post {}.", name, *a.target);
    case ActionKind::kReply:
      return fmt::format("{} replied to post {}: \"{}\"", name, *a.target, *a.content);
    case ActionKind::kLike:
      return fmt::format("{} liked post {}.", name, *a.target);
    case ActionKind::kDoNothing:
      return {};
  }
  return {};
}

std::string textualize_action(const AgentAction& a, std::span<const AgentState> agents) {
  if (a.agent_id >= agents.size()) {
    throw ValidationError("action by unknown agent " + std::to_string(a.agent_id));
  }
  return textualize_action(a, agents[a.agent_id].persona.name);
}

SummarizerConfig SummarizerConfig::load_default() {
  SummarizerConfig cfg;
  cfg.prompt = PromptTemplate::load(std::filesystem::path(UGCSIM_DATA_DIR) / "prompts" /
                                    "summarize.v1.txt");
  return cfg;
}

TextMeanFieldState summarize_mean_field(std::span<const std::string> action_texts,
                                        const TextMeanFieldState& prev, int step,
                                        std::string_view ugc_text, ChatBackend& backend,
                                        const SummarizerConfig& cfg) {
  std::string lines;
  for (const auto& t : action_texts) {
    if (t.empty()) continue;
    lines += "- ";
    lines += text::collapse_whitespace(t);
    lines += '\n';
  }
  if (lines.empty()) {
    const std::string carried =
        prev.summary.empty() ? std::string(kNoActivitySentinel) : prev.summary;
    return {text::truncate_utf8(carried, cfg.summary_cap), step};
  }
  lines.pop_back();
  const std::string prev_text = prev.summary.empty() ? std::string(kNoActivitySentinel)
                                                     : prev.summary;
  const std::string prompt = cfg.prompt.render({{"prev_summary", prev_text},
                                                {"actions", lines},
                                                {"ugc_text", text::collapse_whitespace(ugc_text)}});
  const ChatResponse resp = backend.complete(ChatRequest::user(prompt, CallSite::kSummary));
  return {text::truncate_utf8(text::trim(resp.text), cfg.summary_cap), step};
}

}  // namespace ugcsim

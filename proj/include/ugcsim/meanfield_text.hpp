#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ugcsim/llm_backend.hpp"
#include "ugcsim/population.hpp"
#include "ugcsim/prompt_template.hpp"

namespace ugcsim {

enum class ActionKind { kPost = 0, kRetweet = 1, kReply = 2, kLike = 3, kDoNothing = 4 };

inline constexpr std::size_t kActionKindCount = 5;
inline constexpr std::array<ActionKind, kActionKindCount> kAllActionKinds = {
    ActionKind::kPost, ActionKind::kRetweet, ActionKind::kReply, ActionKind::kLike,
    ActionKind::kDoNothing};

/// "post", "retweet", "reply", "like", "do_nothing".
std::string_view to_string(ActionKind kind);
/// Accepts the canonical names plus "do nothing", "nothing" and "none".
std::optional<ActionKind> parse_action_kind(std::string_view s);

struct AgentAction {
  AgentId agent_id = 0;
  ActionKind kind = ActionKind::kDoNothing;
  /// Post id, or an action reference "s<step>-a<agent>".
  std::optional<std::string> target;
  std::optional<std::string> content;

  bool operator==(const AgentAction&) const = default;
};

/// Throws ValidationError unless target/content presence matches the kind.
void validate_action(const AgentAction& action);

/// Reference to the action agent `agent` took at `step`.
std::string action_ref(int step, AgentId agent);
/// Inverse of action_ref; nullopt for plain post ids.
std::optional<std::pair<int, AgentId>> parse_action_ref(std::string_view ref);

/// Fixed-template sentence for an action; empty for DoNothing.
std::string textualize_action(const AgentAction& action, std::string_view actor_name);
std::string textualize_action(const AgentAction& action, std::span<const AgentState> agents);

inline constexpr std::string_view kNoActivitySentinel = "No activity yet.";

struct TextMeanFieldState {
  std::string summary;
  int step = 0;
};

struct SummarizerConfig {
  PromptTemplate prompt;
  std::size_t summary_cap = 800;

  /// Template from the data directory.
  static SummarizerConfig load_default();
};

/// Updates the textual mean field from this step's action sentences.
/// No non-empty sentences: the previous summary (or the sentinel) carries
/// forward and the backend is not called.
TextMeanFieldState summarize_mean_field(std::span<const std::string> action_texts,
                                        const TextMeanFieldState& prev, int step,
                                        std::string_view ugc_text, ChatBackend& backend,
                                        const SummarizerConfig& cfg);

}  // namespace ugcsim

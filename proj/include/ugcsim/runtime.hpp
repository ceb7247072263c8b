#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ugcsim/dynamics.hpp"
#include "ugcsim/llm_backend.hpp"
#include "ugcsim/meanfield_text.hpp"
#include "ugcsim/population.hpp"
#include "ugcsim/post.hpp"
#include "ugcsim/prompt_template.hpp"

namespace ugcsim {

/// kSmf: agents read the social mean field. kStandard: agents read every
/// action of every neighbour (either follow direction) instead.
enum class SimMode { kSmf, kStandard };

std::string_view to_string(SimMode mode);
SimMode parse_sim_mode(std::string_view s);

struct MeanFieldState {
  TextMeanFieldState text;
  double numeric = 0.0;
};

struct DecisionOutcome {
  AgentAction action;
  double new_opinion = 0.0;
};

struct DecisionPrompts {
  PromptTemplate smf;
  PromptTemplate standard;

  static DecisionPrompts load_default();
};

struct RuntimeConfig {
  std::size_t rounds = 6;
  std::uint64_t seed = 1;
  DynamicsConfig dynamics;
  /// Memory entries shown in a decision prompt.
  std::size_t memory_prompt_k = 20;
  std::size_t concurrency = 4;
  SimMode mode = SimMode::kSmf;
  SummarizerConfig summarizer;
  DecisionPrompts prompts;
  /// Copied into the trace header.
  std::string config_digest;

  /// Shipped templates, default numbers.
  static RuntimeConfig with_default_prompts();
};

/// The action menu block listing the five action names.
std::string action_menu();

/// Decision prompt for one activated agent. In standard mode `neighbor_feed`
/// replaces the mean-field block.
std::string build_decision_prompt(const AgentState& agent, const UgcPost& post,
                                  const MeanFieldState& mf,
                                  const std::deque<MemoryEntry>& memory,
                                  const RuntimeConfig& cfg,
                                  const std::string& neighbor_feed = {});

/// Parses "ACTION: / OPINION: / CONTENT: / TARGET:" lines. OPINION is
/// required and clamped to [0, 10]; ACTION defaults to do_nothing; TARGET
/// defaults to `default_target` for kinds that need one. nullopt when the
/// response cannot be turned into a valid outcome.
std::optional<DecisionOutcome> parse_decision(std::string_view response, AgentId agent,
                                              const std::string& default_target);

inline constexpr std::string_view kFormatReminder =
    "\n\nYour previous answer could not be parsed. Answer again using exactly these "
    "lines and nothing else:\nACTION: <post, retweet, reply, like or do_nothing>\n"
    "OPINION: <number from 0 to 10>\nCONTENT: <text, required for post and reply>";

struct DecisionResult {
  DecisionOutcome outcome;
  bool fell_back = false;
  std::string warning;
};

/// Queries the backend, reprompts once with a format reminder, and falls
/// back to (do_nothing, prior opinion) on a second parse failure.
/// BackendError propagates.
DecisionResult decide(ChatBackend& backend, const std::string& prompt, const AgentState& agent,
                      const std::string& post_id);

struct StepRecord {
  int step = 0;
  std::vector<AgentId> activated;
  /// One per activated agent, ascending agent id, do_nothing included.
  std::vector<AgentAction> actions;
  OpinionVector opinions;
  std::string opinion_digest;
  double m_num = 0.0;
  std::string m_text;
  std::vector<std::string> warnings;

  bool operator==(const StepRecord&) const = default;
};

struct PropagationFeatures {
  std::vector<double> m_num_series;
  std::string final_summary;
  /// Indexed by ActionKind.
  std::array<std::size_t, kActionKindCount> action_histogram{};
  double share_above_7_5 = 0.0;

  std::size_t total_actions() const;
  bool operator==(const PropagationFeatures&) const = default;
};

struct PropagationTrace {
  std::string post_id;
  std::size_t n_agents = 0;
  std::size_t rounds = 0;
  std::uint64_t seed = 0;
  SimMode mode = SimMode::kSmf;
  std::string config_digest;
  std::vector<StepRecord> steps;
  bool complete = false;
  std::string error;
};

/// SHA-256 over the opinions rendered at round-trip precision.
std::string opinion_digest(std::span<const double> opinions);

using StepObserver = std::function<void(const StepRecord&)>;

/// Runs rounds 1..cfg.rounds of the post through the population. A backend
/// failure returns the partial trace with complete == false.
[[nodiscard]] PropagationTrace run_simulation(const UgcPost& post, Population population,
                                              const RuntimeConfig& cfg, ChatBackend& backend,
                                              const StepObserver& observer = {});

PropagationFeatures extract_features(const PropagationTrace& trace);

}  // namespace ugcsim

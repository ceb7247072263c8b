#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ugcsim/population.hpp"
#include "ugcsim/post.hpp"

namespace ugcsim {

inline constexpr double kOpinionMin = 0.0;
inline constexpr double kOpinionMax = 10.0;

using OpinionVector = std::vector<double>;

struct DynamicsConfig {
  double epsilon = 6.0;
  double alpha_active = 0.8;
  double alpha_inactive = 0.2;

  void validate() const;
};

/// Neighbours j of i (followees, ascending) with |o_j - o_i| < epsilon.
/// `participating`, when non-empty, restricts both i's candidates and i.
std::vector<AgentId> influence_set(AgentId i, std::span<const double> opinions,
                                   const SocialGraph& graph, double epsilon,
                                   std::span<const std::uint8_t> participating = {});

/// One synchronous bounded-confidence update read from the input snapshot:
///   o_i' = o_i + (1/|J_i|) * sum_{j in J_i} alpha_j (o_j - o_i)
/// with o_i' = o_i when J_i is empty. Agents whose `participating` flag is 0
/// neither move nor influence anyone.
OpinionVector deffuant_step(std::span<const double> opinions,
                            const SocialGraph& graph,
                            std::span<const double> weights,
                            const DynamicsConfig& cfg,
                            std::span<const std::uint8_t> participating = {});

/// Arithmetic mean over all agents. Throws on an empty vector.
double numeric_mean_field(std::span<const double> opinions);

/// Cosine similarity between two token bags (count vectors). Zero if either
/// side is empty.
double bag_cosine(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Similarity between an agent's interest tags and the post text.
double interest_similarity(const PersonaProfile& persona, const UgcPost& post);

/// clamp(base_activation * (0.5 + sim), 0, 1).
double activation_probability(const AgentState& agent, const UgcPost& post);

/// Independent Bernoulli draws keyed by (seed, step, agent id).
std::vector<AgentId> sample_activated(std::span<const double> probs,
                                      std::uint64_t seed, std::uint64_t step);

}  // namespace ugcsim

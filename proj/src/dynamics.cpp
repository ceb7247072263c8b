#include "ugcsim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ugcsim/error.hpp"
#include "ugcsim/rng.hpp"
#include "ugcsim/text.hpp"

namespace ugcsim {

void DynamicsConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("must be >= 0", "epsilon");
  if (!(alpha_active >= 0.0 && alpha_active <= 1.0)) {
    throw ConfigError("must lie in [0, 1]", "alpha_active");
  }
  if (!(alpha_inactive >= 0.0 && alpha_inactive <= 1.0)) {
    throw ConfigError("must lie in [0, 1]", "alpha_inactive");
  }
}

namespace {

bool takes_part(std::span<const std::uint8_t> participating, AgentId i) {
  return participating.empty() || participating[i] != 0;
}

void check_shapes(std::span<const double> opinions, const SocialGraph& graph,
                  std::span<const std::uint8_t> participating) {
  if (opinions.size() != graph.size()) {
    throw ValidationError("opinion vector length does not match graph size");
  }
  if (!participating.empty() && participating.size() != graph.size()) {
    throw ValidationError("participation mask length does not match graph size");
  }
}

}  // namespace

std::vector<AgentId> influence_set(AgentId i, std::span<const double> opinions,
                                   const SocialGraph& graph, double epsilon,
                                   std::span<const std::uint8_t> participating) {
  check_shapes(opinions, graph, participating);
  if (i >= graph.size()) {
    throw std::out_of_range("agent id " + std::to_string(i) + " outside graph");
  }
  std::vector<AgentId> out;
  if (!takes_part(participating, i)) return out;
  const double oi = opinions[i];
  for (AgentId j : graph.followees(i)) {
    if (j == i || !takes_part(participating, j)) continue;
    if (std::abs(opinions[j] - oi) < epsilon) out.push_back(j);
  }
  return out;
}

OpinionVector deffuant_step(std::span<const double> opinions,
                            const SocialGraph& graph,
                            std::span<const double> weights,
                            const DynamicsConfig& cfg,
                            std::span<const std::uint8_t> participating) {
  check_shapes(opinions, graph, participating);
  if (weights.size() != opinions.size()) {
    throw ValidationError("weight vector length does not match opinion vector");
  }
  OpinionVector next(opinions.begin(), opinions.end());
  for (AgentId i = 0; i < graph.size(); ++i) {
    if (!takes_part(participating, i)) continue;
    const double oi = opinions[i];
    double sum = 0.0;
    std::size_t count = 0;
    double lo = oi, hi = oi;
    for (AgentId j : graph.followees(i)) {
      if (j == i || !takes_part(participating, j)) continue;
      const double oj = opinions[j];
      if (!(std::abs(oj - oi) < cfg.epsilon)) continue;
      sum += weights[j] * (oj - oi);
      ++count;
      lo = std::min(lo, oj);
      hi = std::max(hi, oj);
    }
    if (count == 0) continue;
    // The exact update is a convex combination of o_i and J_i; the clamp only
    // absorbs last-bit rounding.
    next[i] = std::clamp(oi + sum / static_cast<double>(count), lo, hi);
  }
  return next;
}

double numeric_mean_field(std::span<const double> opinions) {
  if (opinions.empty()) throw ValidationError("mean field of an empty population");
  const double sum = std::accumulate(opinions.begin(), opinions.end(), 0.0);
  return sum / static_cast<double>(opinions.size());
}

double bag_cosine(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::map<std::string, std::pair<double, double>> counts;
  for (const auto& t : a) counts[t].first += 1.0;
  for (const auto& t : b) counts[t].second += 1.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [_, c] : counts) {
    dot += c.first * c.second;
    na += c.first * c.first;
    nb += c.second * c.second;
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

double interest_similarity(const PersonaProfile& persona, const UgcPost& post) {
  std::vector<std::string> interest_tokens;
  for (const auto& tag : persona.interests) {
    for (auto& t : text::tokenize(tag)) interest_tokens.push_back(std::move(t));
  }
  return bag_cosine(interest_tokens, text::tokenize(post.text));
}

double activation_probability(const AgentState& agent, const UgcPost& post) {
  const double sim = interest_similarity(agent.persona, post);
  return std::clamp(agent.cls.base_activation * (0.5 + sim), 0.0, 1.0);
}

std::vector<AgentId> sample_activated(std::span<const double> probs,
                                      std::uint64_t seed, std::uint64_t step) {
  std::vector<AgentId> out;
  for (AgentId i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("activation probability outside [0, 1]");
    if (unit_interval(counter_hash(seed, step, i)) < p) out.push_back(i);
  }
  return out;
}

}  // namespace ugcsim

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ugcsim {

using AgentId = std::uint32_t;

enum class Gender { kFemale, kMale, kNonBinary };

std::string_view to_string(Gender g);
Gender parse_gender(std::string_view s);

struct PersonaProfile {
  std::string name;
  Gender gender = Gender::kFemale;
  std::string occupation;
  std::vector<std::string> interests;
  std::vector<std::string> personality;

  bool operator==(const PersonaProfile&) const = default;
};

enum class Participation { kLurker = 0, kContributor = 1, kCreator = 2 };

std::string_view to_string(Participation p);
Participation parse_participation(std::string_view s);

struct ParticipationClass {
  Participation kind = Participation::kLurker;
  double base_activation = 0.0;

  bool operator==(const ParticipationClass&) const = default;
};

/// Fractions of the population per class. Must sum to one.
struct ClassSplit {
  double lurker = 0.90;
  double contributor = 0.09;
  double creator = 0.01;
};

/// Per-class base activation probabilities, strictly increasing by class.
struct ClassBaseRates {
  double lurker = 0.05;
  double contributor = 0.30;
  double creator = 0.80;

  double of(Participation p) const;
};

/// Directed follow graph. An edge (follower, followee) means the follower
/// sees what the followee does; `followees(i)` is the neighbourhood that
/// influences agent i.
class SocialGraph {
 public:
  SocialGraph() = default;
  explicit SocialGraph(std::size_t n);

  std::size_t size() const { return followees_.size(); }
  std::size_t edge_count() const { return edge_count_; }

  /// Adds follower -> followee. Self-loops and duplicates are rejected.
  void add_edge(AgentId follower, AgentId followee);
  void add_mutual(AgentId a, AgentId b);
  bool has_edge(AgentId follower, AgentId followee) const;

  /// Sorted ascending.
  std::span<const AgentId> followees(AgentId i) const;
  std::span<const AgentId> followers(AgentId i) const;

  std::size_t out_degree(AgentId i) const { return followees(i).size(); }

  /// (follower, followee) pairs in ascending order.
  std::vector<std::pair<AgentId, AgentId>> edges() const;

 private:
  void check(AgentId i) const;
  std::vector<std::vector<AgentId>> followees_;
  std::vector<std::vector<AgentId>> followers_;
  std::size_t edge_count_ = 0;
};

enum class MemoryKind { kReceivedUgc, kOwnAction, kObservedMeanField };

std::string_view to_string(MemoryKind k);
MemoryKind parse_memory_kind(std::string_view s);

struct MemoryEntry {
  int step = 0;
  MemoryKind kind = MemoryKind::kReceivedUgc;
  std::string content;

  bool operator==(const MemoryEntry&) const = default;
};

/// FIFO memory with a fixed capacity. Steps must be non-decreasing.
class Memory {
 public:
  explicit Memory(std::size_t capacity = 20) : capacity_(capacity) {}

  void push(MemoryEntry entry);
  const std::deque<MemoryEntry>& entries() const { return entries_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::size_t capacity_;
  std::deque<MemoryEntry> entries_;
};

struct AgentState {
  AgentId id = 0;
  PersonaProfile persona;
  ParticipationClass cls;
  double opinion = 0.0;
  double influence_weight = 0.0;
  Memory memory;
  bool exposed = false;
  bool activated = false;
};

/// Attribute pools personas are drawn from.
struct PersonaPools {
  std::vector<std::string> female_names;
  std::vector<std::string> male_names;
  std::vector<std::string> neutral_names;
  std::vector<std::string> surnames;
  std::vector<std::string> occupations;
  std::vector<std::string> interests;
  std::vector<std::string> personality;
  std::string version;

  static PersonaPools load(const std::filesystem::path& path);
  /// Pools from the shipped data directory.
  static PersonaPools load_default();
};

std::vector<PersonaProfile> generate_personas(std::size_t n, std::uint64_t seed,
                                              const PersonaPools& pools);

/// Largest-remainder class counts; ties go to the lower class.
std::vector<std::size_t> class_counts(std::size_t n, const ClassSplit& split);

std::vector<ParticipationClass> assign_classes(std::size_t n,
                                               const ClassSplit& split,
                                               std::uint64_t seed,
                                               const ClassBaseRates& rates = {});

/// Preferential attachment over a seed clique of attach_m + 1 nodes; every
/// attachment is a mutual follow.
SocialGraph generate_graph(std::size_t n, std::size_t attach_m,
                           std::uint64_t seed);

struct PopulationConfig {
  std::size_t n_agents = 200;
  std::uint64_t seed = 1;
  ClassSplit split;
  ClassBaseRates base_rates;
  std::size_t attach_m = 3;
  double alpha_inactive = 0.2;
  std::size_t memory_capacity = 20;
};

struct Population {
  std::vector<AgentState> agents;
  SocialGraph graph;
};

Population build_population(const PopulationConfig& cfg,
                            const PersonaPools& pools);

/// One JSON record per agent after a header line; edges as "src dst" lines.
void write_population(const Population& pop, std::ostream& agents_out,
                      std::ostream& edges_out);
Population read_population(std::istream& agents_in, std::istream& edges_in,
                           std::size_t memory_capacity = 20);

}  // namespace ugcsim

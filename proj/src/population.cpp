#include "ugcsim/population.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ugcsim/error.hpp"
#include "ugcsim/rng.hpp"

namespace ugcsim {

using nlohmann::ordered_json;

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::kFemale: return "female";
    case Gender::kMale: return "male";
    case Gender::kNonBinary: return "nonbinary";
  }
  return "female";
}

Gender parse_gender(std::string_view s) {
  if (s == "female") return Gender::kFemale;
  if (s == "male") return Gender::kMale;
  if (s == "nonbinary") return Gender::kNonBinary;
  throw ValidationError("unknown gender '" + std::string(s) + "'");
}

std::string_view to_string(Participation p) {
  switch (p) {
    case Participation::kLurker: return "lurker";
    case Participation::kContributor: return "contributor";
    case Participation::kCreator: return "creator";
  }
  return "lurker";
}

Participation parse_participation(std::string_view s) {
  if (s == "lurker") return Participation::kLurker;
  if (s == "contributor") return Participation::kContributor;
  if (s == "creator") return Participation::kCreator;
  throw ValidationError("unknown participation class '" + std::string(s) + "'");
}

double ClassBaseRates::of(Participation p) const {
  switch (p) {
    case Participation::kLurker: return lurker;
    case Participation::kContributor: return contributor;
    case Participation::kCreator: return creator;
  }
  return lurker;
}

std::string_view to_string(MemoryKind k) {
  switch (k) {
    case MemoryKind::kReceivedUgc: return "received_ugc";
    case MemoryKind::kOwnAction: return "own_action";
    case MemoryKind::kObservedMeanField: return "observed_mean_field";
  }
  return "received_ugc";
}

MemoryKind parse_memory_kind(std::string_view s) {
  if (s == "received_ugc") return MemoryKind::kReceivedUgc;
  if (s == "own_action") return MemoryKind::kOwnAction;
  if (s == "observed_mean_field") return MemoryKind::kObservedMeanField;
  throw ValidationError("unknown memory kind '" + std::string(s) + "'");
}

// --- SocialGraph -----------------------------------------------------------

SocialGraph::SocialGraph(std::size_t n) : followees_(n), followers_(n) {}

void SocialGraph::check(AgentId i) const {
  if (i >= size()) {
    throw std::out_of_range("agent id " + std::to_string(i) + " outside [0, " +
                            std::to_string(size()) + ")");
  }
}

void SocialGraph::add_edge(AgentId follower, AgentId followee) {
  check(follower);
  check(followee);
  if (follower == followee) throw ValidationError("self-loop in follow graph");
  auto& out = followees_[follower];
  auto it = std::lower_bound(out.begin(), out.end(), followee);
  if (it != out.end() && *it == followee) {
    throw ValidationError("duplicate follow edge");
  }
  out.insert(it, followee);
  auto& in = followers_[followee];
  in.insert(std::lower_bound(in.begin(), in.end(), follower), follower);
  ++edge_count_;
}

void SocialGraph::add_mutual(AgentId a, AgentId b) {
  add_edge(a, b);
  add_edge(b, a);
}

bool SocialGraph::has_edge(AgentId follower, AgentId followee) const {
  check(follower);
  check(followee);
  const auto& out = followees_[follower];
  return std::binary_search(out.begin(), out.end(), followee);
}

std::span<const AgentId> SocialGraph::followees(AgentId i) const {
  check(i);
  return followees_[i];
}

std::span<const AgentId> SocialGraph::followers(AgentId i) const {
  check(i);
  return followers_[i];
}

std::vector<std::pair<AgentId, AgentId>> SocialGraph::edges() const {
  std::vector<std::pair<AgentId, AgentId>> out;
  out.reserve(edge_count_);
  for (AgentId i = 0; i < size(); ++i) {
    for (AgentId j : followees_[i]) out.emplace_back(i, j);
  }
  return out;
}

// --- Memory ----------------------------------------------------------------

void Memory::push(MemoryEntry entry) {
  if (!entries_.empty() && entry.step < entries_.back().step) {
    throw ValidationError("memory entries must have non-decreasing steps");
  }
  if (capacity_ == 0) return;
  entries_.push_back(std::move(entry));
  while (entries_.size() > capacity_) entries_.pop_front();
}

// --- Persona pools ---------------------------------------------------------

PersonaPools PersonaPools::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read persona pools " + path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("persona pools: ") + e.what());
  }
  PersonaPools p;
  auto list = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].empty()) {
      throw ConfigError("persona pools: missing or empty list", key);
    }
    return j[key].get<std::vector<std::string>>();
  };
  p.female_names = list("female_names");
  p.male_names = list("male_names");
  p.neutral_names = list("neutral_names");
  p.surnames = list("surnames");
  p.occupations = list("occupations");
  p.interests = list("interests");
  p.personality = list("personality");
  p.version = j.value("version", "unversioned");
  if (p.interests.size() < 5) {
    throw ConfigError("persona pools need at least 5 interest tags", "interests");
  }
  if (p.personality.size() < 3) {
    throw ConfigError("persona pools need at least 3 traits", "personality");
  }
  return p;
}

PersonaPools PersonaPools::load_default() {
  return load(std::filesystem::path(UGCSIM_DATA_DIR) / "persona_pools.json");
}

namespace {

template <typename T>
const T& pick(Engine& engine, const std::vector<T>& pool) {
  return pool[uniform_index(engine, pool.size())];
}

// k distinct items via a partial Fisher-Yates over an index permutation;
// the chosen items keep pool order so personas read naturally.
std::vector<std::string> pick_distinct(Engine& engine,
                                       const std::vector<std::string>& pool,
                                       std::size_t k) {
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + uniform_index(engine, pool.size() - i);
    std::swap(idx[i], idx[j]);
  }
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(pool[idx[i]]);
  return out;
}

}  // namespace

std::vector<PersonaProfile> generate_personas(std::size_t n, std::uint64_t seed,
                                              const PersonaPools& pools) {
  if (n == 0) throw ConfigError("population must have at least one agent", "n_agents");
  Engine engine = make_engine(seed, 1);
  std::vector<PersonaProfile> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PersonaProfile p;
    const double g = uniform_real(engine);
    const std::vector<std::string>* names = nullptr;
    if (g < 0.48) {
      p.gender = Gender::kFemale;
      names = &pools.female_names;
    } else if (g < 0.96) {
      p.gender = Gender::kMale;
      names = &pools.male_names;
    } else {
      p.gender = Gender::kNonBinary;
      names = &pools.neutral_names;
    }
    p.name = pick(engine, *names) + " " + pick(engine, pools.surnames);
    p.occupation = pick(engine, pools.occupations);
    p.interests = pick_distinct(engine, pools.interests, 3 + uniform_index(engine, 3));
    p.personality = pick_distinct(engine, pools.personality, 2 + uniform_index(engine, 2));
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::size_t> class_counts(std::size_t n, const ClassSplit& split) {
  const double fractions[3] = {split.lurker, split.contributor, split.creator};
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0) || f > 1.0) {
      throw ConfigError("class fractions must lie in [0, 1]", "split");
    }
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("class fractions must sum to 1 (got " +
                          std::to_string(total) + ")",
                      "split");
  }
  std::vector<std::size_t> counts(3);
  double remainders[3];
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = fractions[k] * static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainders[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  std::vector<int> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) {
    ++counts[order[r % 3]];
  }
  return counts;
}

std::vector<ParticipationClass> assign_classes(std::size_t n,
                                               const ClassSplit& split,
                                               std::uint64_t seed,
                                               const ClassBaseRates& rates) {
  if (!(rates.lurker < rates.contributor && rates.contributor < rates.creator)) {
    throw ConfigError("base activations must increase lurker < contributor < creator",
                      "base_activation");
  }
  const auto counts = class_counts(n, split);
  std::vector<ParticipationClass> out;
  out.reserve(n);
  for (int k = 0; k < 3; ++k) {
    const auto kind = static_cast<Participation>(k);
    for (std::size_t c = 0; c < counts[k]; ++c) out.push_back({kind, rates.of(kind)});
  }
  Engine engine = make_engine(seed, 2);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(out[i - 1], out[uniform_index(engine, i)]);
  }
  return out;
}

SocialGraph generate_graph(std::size_t n, std::size_t attach_m, std::uint64_t seed) {
  if (attach_m < 1) throw ConfigError("attach_m must be at least 1", "attach_m");
  if (n <= attach_m) {
    throw ConfigError("n_agents must exceed attach_m", "attach_m");
  }
  SocialGraph g(n);
  // Each endpoint appears once per incident attachment, so uniform draws from
  // this list are degree-proportional.
  std::vector<AgentId> endpoints;
  const auto core = static_cast<AgentId>(attach_m + 1);
  for (AgentId a = 0; a < core; ++a) {
    for (AgentId b = a + 1; b < core; ++b) {
      g.add_mutual(a, b);
      endpoints.push_back(a);
      endpoints.push_back(b);
    }
  }
  Engine engine = make_engine(seed, 3);
  std::vector<AgentId> targets;
  for (auto v = core; v < n; ++v) {
    targets.clear();
    while (targets.size() < attach_m) {
      const AgentId t = endpoints[uniform_index(engine, endpoints.size())];
      if (std::find(targets.begin(), targets.end(), t) == targets.end()) {
        targets.push_back(t);
      }
    }
    for (AgentId t : targets) {
      g.add_mutual(v, t);
      endpoints.push_back(v);
      endpoints.push_back(t);
    }
  }
  return g;
}

Population build_population(const PopulationConfig& cfg, const PersonaPools& pools) {
  auto personas = generate_personas(cfg.n_agents, cfg.seed, pools);
  auto classes = assign_classes(cfg.n_agents, cfg.split, cfg.seed, cfg.base_rates);
  Population pop;
  if (cfg.n_agents >= 2) {
    pop.graph = generate_graph(cfg.n_agents, std::min(cfg.attach_m, cfg.n_agents - 1),
                               cfg.seed);
  } else {
    pop.graph = SocialGraph(cfg.n_agents);
  }
  pop.agents.reserve(cfg.n_agents);
  for (std::size_t i = 0; i < cfg.n_agents; ++i) {
    AgentState a{.id = static_cast<AgentId>(i),
                 .persona = std::move(personas[i]),
                 .cls = classes[i],
                 .opinion = 0.0,
                 .influence_weight = cfg.alpha_inactive,
                 .memory = Memory(cfg.memory_capacity),
                 .exposed = false,
                 .activated = false};
    pop.agents.push_back(std::move(a));
  }
  return pop;
}

void write_population(const Population& pop, std::ostream& agents_out,
                      std::ostream& edges_out) {
  ordered_json header = {{"schema", "ugcsim.population"},
                         {"version", 1},
                         {"n", pop.agents.size()}};
  agents_out << header.dump() << '\n';
  for (const auto& a : pop.agents) {
    ordered_json rec = {
        {"id", a.id},
        {"class", to_string(a.cls.kind)},
        {"base_activation", a.cls.base_activation},
        {"name", a.persona.name},
        {"gender", to_string(a.persona.gender)},
        {"occupation", a.persona.occupation},
        {"interests", a.persona.interests},
        {"personality", a.persona.personality},
        {"weight", a.influence_weight},
    };
    agents_out << rec.dump() << '\n';
  }
  edges_out << "# ugcsim.edges v1 n=" << pop.graph.size() << '\n';
  for (const auto& [src, dst] : pop.graph.edges()) {
    edges_out << src << ' ' << dst << '\n';
  }
}

Population read_population(std::istream& agents_in, std::istream& edges_in,
                           std::size_t memory_capacity) {
  Population pop;
  std::string line;
  if (!std::getline(agents_in, line)) throw DataIntegrityError("population file is empty");
  try {
    const auto header = ordered_json::parse(line);
    if (header.value("schema", "") != "ugcsim.population") {
      throw DataIntegrityError("not a population file");
    }
    while (std::getline(agents_in, line)) {
      if (line.empty()) continue;
      const auto j = ordered_json::parse(line);
      AgentState a;
      a.id = j.at("id").get<AgentId>();
      a.cls.kind = parse_participation(j.at("class").get<std::string>());
      a.cls.base_activation = j.at("base_activation").get<double>();
      a.persona.name = j.at("name").get<std::string>();
      a.persona.gender = parse_gender(j.at("gender").get<std::string>());
      a.persona.occupation = j.at("occupation").get<std::string>();
      a.persona.interests = j.at("interests").get<std::vector<std::string>>();
      a.persona.personality = j.at("personality").get<std::vector<std::string>>();
      a.influence_weight = j.at("weight").get<double>();
      a.memory = Memory(memory_capacity);
      if (a.id != pop.agents.size()) throw DataIntegrityError("agent ids must be contiguous");
      pop.agents.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataIntegrityError(std::string("malformed population record: ") + e.what());
  }
  pop.graph = SocialGraph(pop.agents.size());
  while (std::getline(edges_in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    AgentId src, dst;
    if (!(ls >> src >> dst)) throw DataIntegrityError("malformed edge line '" + line + "'");
    pop.graph.add_edge(src, dst);
  }
  return pop;
}

}  // namespace ugcsim

#include "ugcsim/config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "ugcsim/digest.hpp"
#include "ugcsim/error.hpp"
#include "ugcsim/text.hpp"

namespace ugcsim {

namespace {

std::size_t as_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc{} || r.ptr != end) throw ConfigError("expected a non-negative integer, got '" + v + "'", key);
  return out;
}

std::uint64_t as_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc{} || r.ptr != end) throw ConfigError("expected a non-negative integer, got '" + v + "'", key);
  return out;
}

double as_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(out)) {
    throw ConfigError("expected a number, got '" + v + "'", key);
  }
  return out;
}

std::string real_str(double x) { return fmt::format("{}", x); }

struct Field {
  std::function<void(SimConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const SimConfig&)> get;
  bool in_digest = true;
};

#define UGCSIM_COUNT(member) \
  Field{[](SimConfig& c, const std::string& k, const std::string& v) { c.member = as_count(k, v); }, \
        [](const SimConfig& c) { return std::to_string(c.member); }}
#define UGCSIM_REAL(member) \
  Field{[](SimConfig& c, const std::string& k, const std::string& v) { c.member = as_real(k, v); }, \
        [](const SimConfig& c) { return real_str(c.member); }}
#define UGCSIM_TEXT(member) \
  Field{[](SimConfig& c, const std::string&, const std::string& v) { c.member = v; }, \
        [](const SimConfig& c) { return c.member; }}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> kFields = [] {
    std::map<std::string, Field> f;
    f["n_agents"] = UGCSIM_COUNT(n_agents);
    f["rounds"] = UGCSIM_COUNT(rounds);
    f["seed"] = Field{[](SimConfig& c, const std::string& k, const std::string& v) { c.seed = as_u64(k, v); },
                      [](const SimConfig& c) { return std::to_string(c.seed); }};
    f["epsilon"] = UGCSIM_REAL(epsilon);
    f["alpha_active"] = UGCSIM_REAL(alpha_active);
    f["alpha_inactive"] = UGCSIM_REAL(alpha_inactive);
    f["split_lurker"] = UGCSIM_REAL(split.lurker);
    f["split_contributor"] = UGCSIM_REAL(split.contributor);
    f["split_creator"] = UGCSIM_REAL(split.creator);
    f["base_lurker"] = UGCSIM_REAL(base_rates.lurker);
    f["base_contributor"] = UGCSIM_REAL(base_rates.contributor);
    f["base_creator"] = UGCSIM_REAL(base_rates.creator);
    f["attach_m"] = UGCSIM_COUNT(attach_m);
    f["memory_capacity"] = UGCSIM_COUNT(memory_capacity);
    f["memory_prompt_k"] = UGCSIM_COUNT(memory_prompt_k);
    f["summary_cap"] = UGCSIM_COUNT(summary_cap);
    f["concurrency"] = UGCSIM_COUNT(concurrency);
    f["concurrency"].in_digest = false;
    f["mode"] = Field{[](SimConfig& c, const std::string&, const std::string& v) { c.mode = parse_sim_mode(v); },
                      [](const SimConfig& c) { return std::string(to_string(c.mode)); }};
    f["backend"] = UGCSIM_TEXT(backend);
    f["backend.model"] = UGCSIM_TEXT(model);
    f["backend.temperature"] = UGCSIM_REAL(temperature);
    f["backend.max_retries"] = Field{
        [](SimConfig& c, const std::string& k, const std::string& v) {
          c.max_retries = static_cast<int>(as_count(k, v));
        },
        [](const SimConfig& c) { return std::to_string(c.max_retries); }};
    f["backend.base_url"] = UGCSIM_TEXT(base_url);
    f["backend.api_key_env"] = UGCSIM_TEXT(api_key_env);
    f["backend.api_key_env"].in_digest = false;
    f["backend.timeout_s"] = UGCSIM_REAL(timeout_s);
    f["backend.timeout_s"].in_digest = false;
    f["backend.backoff_ms"] = UGCSIM_REAL(backoff_ms);
    f["backend.backoff_ms"].in_digest = false;
    f["backend.cache_dir"] = UGCSIM_TEXT(cache_dir);
    f["backend.cache_dir"].in_digest = false;
    f["scripted.rules"] = UGCSIM_TEXT(scripted_rules);
    f["scripted.score_base"] = UGCSIM_REAL(scripted_score_base);
    f["scripted.score_slope"] = UGCSIM_REAL(scripted_score_slope);
    f["label_min"] = UGCSIM_REAL(label_min);
    f["label_max"] = UGCSIM_REAL(label_max);
    f["ridge_lambda"] = UGCSIM_REAL(ridge_lambda);
    f["data_dir"] = UGCSIM_TEXT(data_dir);
    f["data_dir"].in_digest = false;  // file contents are hashed instead
    f["persona_pools"] = UGCSIM_TEXT(persona_pools);
    f["field_map"] = UGCSIM_TEXT(field_map);
    f["prompt.decision_smf"] = UGCSIM_TEXT(prompt_decision_smf);
    f["prompt.decision_standard"] = UGCSIM_TEXT(prompt_decision_standard);
    f["prompt.summarize"] = UGCSIM_TEXT(prompt_summarize);
    f["prompt.predict"] = UGCSIM_TEXT(prompt_predict);
    return f;
  }();
  return kFields;
}

#undef UGCSIM_COUNT
#undef UGCSIM_REAL
#undef UGCSIM_TEXT

std::string read_file(const std::filesystem::path& p, const std::string& key) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string(), key);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

void SimConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown configuration key", key);
  it->second.set(*this, key, value);
}

SimConfig SimConfig::parse(std::string_view source) {
  SimConfig cfg;
  std::istringstream in{std::string(source)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto hash = raw.find('#');
    std::string line = text::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("line {}: expected key = value", lineno));
    }
    std::string key = text::trim(line.substr(0, eq));
    std::string value = text::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    cfg.set(key, value);
  }
  cfg.validate();
  return cfg;
}

SimConfig SimConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void SimConfig::validate() const {
  if (n_agents < 1) throw ConfigError("must be >= 1", "n_agents");
  if (n_agents > 1'000'000) throw ConfigError("must be <= 1000000", "n_agents");
  if (rounds < 1) throw ConfigError("must be >= 1", "rounds");
  if (attach_m < 1) throw ConfigError("must be >= 1", "attach_m");
  if (n_agents >= 2 && attach_m >= n_agents) throw ConfigError("must be < n_agents", "attach_m");
  DynamicsConfig{epsilon, alpha_active, alpha_inactive}.validate();
  const double total = split.lurker + split.contributor + split.creator;
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1", "split_lurker");
  for (double b : {base_rates.lurker, base_rates.contributor, base_rates.creator}) {
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("base activations must lie in [0, 1]", "base_lurker");
  }
  if (!(base_rates.lurker < base_rates.contributor && base_rates.contributor < base_rates.creator)) {
    throw ConfigError("base activations must increase lurker < contributor < creator", "base_lurker");
  }
  if (summary_cap < 16) throw ConfigError("must be >= 16", "summary_cap");
  if (concurrency < 1) throw ConfigError("must be >= 1", "concurrency");
  if (backend != "scripted" && backend != "http" && backend != "replay") {
    throw ConfigError("expected scripted, http or replay", "backend");
  }
  if (backend == "replay" && cache_dir.empty()) {
    throw ConfigError("replay backend needs backend.cache_dir", "backend.cache_dir");
  }
  if (!(temperature >= 0.0 && temperature <= 2.0)) throw ConfigError("must lie in [0, 2]", "backend.temperature");
  if (!(timeout_s > 0.0)) throw ConfigError("must be > 0", "backend.timeout_s");
  if (!(backoff_ms > 0.0)) throw ConfigError("must be > 0", "backend.backoff_ms");
  if (!(label_min < label_max)) throw ConfigError("must be < label_max", "label_min");
  if (!(ridge_lambda >= 0.0)) throw ConfigError("must be >= 0", "ridge_lambda");
  parse_decision_rules(scripted_rules);
}

std::vector<std::string> SimConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : fields()) out.push_back(k);
  return out;
}

std::string SimConfig::canonical() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

std::filesystem::path SimConfig::resolve(const std::string& relative) const {
  std::filesystem::path p(relative);
  return p.is_absolute() ? p : std::filesystem::path(data_dir) / p;
}

std::string SimConfig::digest() const {
  std::string material;
  for (const auto& [k, f] : fields()) {
    if (f.in_digest) material += k + "=" + f.get(*this) + "\n";
  }
  for (const auto* rel : {&persona_pools, &field_map, &prompt_decision_smf,
                          &prompt_decision_standard, &prompt_summarize, &prompt_predict}) {
    material += "file:" + *rel + "=" + sha256_hex(read_file(resolve(*rel), "data_dir")) + "\n";
  }
  return sha256_hex(material);
}

PopulationConfig SimConfig::population() const {
  PopulationConfig p;
  p.n_agents = n_agents;
  p.seed = seed;
  p.split = split;
  p.base_rates = base_rates;
  p.attach_m = attach_m;
  p.alpha_inactive = alpha_inactive;
  p.memory_capacity = memory_capacity;
  return p;
}

RuntimeConfig SimConfig::runtime() const {
  RuntimeConfig r;
  r.rounds = rounds;
  r.seed = seed;
  r.dynamics = {epsilon, alpha_active, alpha_inactive};
  r.memory_prompt_k = memory_prompt_k;
  r.concurrency = concurrency;
  r.mode = mode;
  r.summarizer.prompt = PromptTemplate::load(resolve(prompt_summarize));
  r.summarizer.prompt.require_subset_of({"prev_summary", "actions", "ugc_text"});
  r.summarizer.summary_cap = summary_cap;
  r.prompts.smf = PromptTemplate::load(resolve(prompt_decision_smf));
  r.prompts.standard = PromptTemplate::load(resolve(prompt_decision_standard));
  const std::set<std::string> common = {"name",     "gender",   "occupation", "interests",
                                        "personality", "opinion", "memory",   "post_id",
                                        "ugc_text", "image",    "action_menu"};
  auto smf_names = common;
  smf_names.insert({"mf_text", "mf_num"});
  auto std_names = common;
  std_names.insert("neighbor_actions");
  r.prompts.smf.require_subset_of(smf_names);
  r.prompts.standard.require_subset_of(std_names);
  r.config_digest = digest();
  return r;
}

PersonaPools SimConfig::pools() const { return PersonaPools::load(resolve(persona_pools)); }

FieldMap SimConfig::load_field_map() const { return FieldMap::load(resolve(field_map)); }

PromptTemplate SimConfig::prediction_prompt() const {
  auto t = PromptTemplate::load(resolve(prompt_predict));
  t.require_subset_of({"enriched_text", "image", "label_min", "label_max"});
  return t;
}

ScriptedRules SimConfig::rules() const {
  ScriptedRules r;
  r.decision = parse_decision_rules(scripted_rules);
  r.score_base = scripted_score_base;
  r.score_slope = scripted_score_slope;
  return r;
}

std::unique_ptr<ChatBackend> SimConfig::make_backend() const {
  BackendSettings s;
  s.model = model;
  s.temperature = temperature;
  s.max_retries = max_retries;
  s.concurrency_limit = concurrency;
  std::unique_ptr<ChatBackend> b;
  if (backend == "scripted") {
    b = std::make_unique<ScriptedBackend>(make_rule_responder(rules()), s);
  } else if (backend == "replay") {
    return std::make_unique<CachedReplayBackend>(cache_dir, s);
  } else {
    HttpSettings h;
    h.base_url = base_url;
    if (const char* key = std::getenv(api_key_env.c_str())) h.api_key = key;
    h.timeout_seconds = timeout_s;
    h.backoff_base_ms = backoff_ms;
    h.jitter_seed = seed;
    b = std::make_unique<HttpBackend>(h, s);
  }
  if (!cache_dir.empty()) b = std::make_unique<CachingBackend>(std::move(b), cache_dir);
  return b;
}

}  // namespace ugcsim

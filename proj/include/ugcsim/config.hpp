#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ugcsim/features.hpp"
#include "ugcsim/llm_backend.hpp"
#include "ugcsim/population.hpp"
#include "ugcsim/runtime.hpp"

namespace ugcsim {

/// Every knob of a run. Loaded from a flat `key = value` file; keys not
/// present keep the defaults below.
struct SimConfig {
  std::size_t n_agents = 200;
  std::size_t rounds = 6;
  std::uint64_t seed = 1;
  double epsilon = 6.0;
  double alpha_active = 0.8;
  double alpha_inactive = 0.2;
  ClassSplit split;
  ClassBaseRates base_rates;
  std::size_t attach_m = 3;
  std::size_t memory_capacity = 20;
  std::size_t memory_prompt_k = 20;
  std::size_t summary_cap = 800;
  std::size_t concurrency = 4;
  SimMode mode = SimMode::kSmf;

  std::string backend = "scripted";  // scripted | http | replay
  std::string model = "scripted";
  double temperature = 1.0;
  int max_retries = 3;
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string api_key_env = "UGCSIM_API_KEY";
  double timeout_s = 60.0;
  double backoff_ms = 500.0;
  std::string cache_dir;  // empty: no cache (replay requires one)

  std::string scripted_rules = "2:9:reply;1:8:like;0:2:do_nothing";
  double scripted_score_base = 1.0;
  double scripted_score_slope = 1.0;

  double label_min = 0.0;
  double label_max = 16.0;
  double ridge_lambda = 1.0;

  std::string data_dir = UGCSIM_DATA_DIR;
  std::string persona_pools = "persona_pools.json";
  std::string field_map = "field_map.json";
  std::string prompt_decision_smf = "prompts/decision_smf.v1.txt";
  std::string prompt_decision_standard = "prompts/decision_standard.v1.txt";
  std::string prompt_summarize = "prompts/summarize.v1.txt";
  std::string prompt_predict = "prompts/predict.v1.txt";

  /// Throws ConfigError naming the offending key.
  static SimConfig parse(std::string_view text);
  static SimConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  void validate() const;

  /// Sorted `key = value` lines covering every key.
  std::string canonical() const;
  static std::vector<std::string> keys();

  /// SHA-256 over canonical() plus the content of every data file the run
  /// reads. Execution-only keys (concurrency) are excluded.
  std::string digest() const;

  std::filesystem::path resolve(const std::string& relative) const;

  PopulationConfig population() const;
  RuntimeConfig runtime() const;
  PersonaPools pools() const;
  FieldMap load_field_map() const;
  PromptTemplate prediction_prompt() const;
  LabelRange label_range() const { return {label_min, label_max}; }
  ScriptedRules rules() const;
  std::unique_ptr<ChatBackend> make_backend() const;
};

}  // namespace ugcsim

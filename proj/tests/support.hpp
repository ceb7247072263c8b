#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ugcsim/population.hpp"

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* env = std::getenv("UGCSIM_TMP");
  std::filesystem::path root = env ? env : std::filesystem::temp_directory_path() / "ugcsim-tests";
  auto dir = root / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

inline ugcsim::AgentState make_agent(ugcsim::AgentId id, std::vector<std::string> interests,
                                     double base, double opinion = 0.0) {
  ugcsim::AgentState a;
  a.id = id;
  a.persona.name = "Agent" + std::to_string(id);
  a.persona.occupation = "tester";
  a.persona.interests = std::move(interests);
  a.persona.personality = {"curious"};
  a.cls = {ugcsim::Participation::kContributor, base};
  a.opinion = opinion;
  return a;
}

}  // namespace testing

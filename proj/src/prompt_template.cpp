#include "ugcsim/prompt_template.hpp"

#include <fstream>
#include <sstream>

#include "ugcsim/error.hpp"

namespace ugcsim {

PromptTemplate::PromptTemplate(std::string source) : source_(std::move(source)) {
  std::string literal;
  const std::string& s = source_;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '{' && i + 1 < s.size() && s[i + 1] == '{') {
      literal.push_back('{');
      ++i;
    } else if (c == '}' && i + 1 < s.size() && s[i + 1] == '}') {
      literal.push_back('}');
      ++i;
    } else if (c == '{') {
      const auto close = s.find('}', i + 1);
      if (close == std::string::npos) {
        throw ValidationError("unterminated placeholder in prompt template");
      }
      std::string name = s.substr(i + 1, close - i - 1);
      if (name.empty() || name.find_first_of("{ \t\n") != std::string::npos) {
        throw ValidationError("malformed placeholder '{" + name + "}'");
      }
      if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
      literal.clear();
      names_.insert(name);
      pieces_.push_back({true, std::move(name)});
      i = close;
    } else if (c == '}') {
      throw ValidationError("stray '}' in prompt template");
    } else {
      literal.push_back(c);
    }
  }
  if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read prompt template " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return PromptTemplate(buf.str());
}

std::string PromptTemplate::render(
    const std::map<std::string, std::string>& values) const {
  std::string out;
  for (const auto& piece : pieces_) {
    if (!piece.is_placeholder) {
      out += piece.text;
      continue;
    }
    const auto it = values.find(piece.text);
    if (it == values.end()) {
      throw ValidationError("no value for placeholder {" + piece.text + "}");
    }
    out += it->second;
  }
  return out;
}

void PromptTemplate::require_subset_of(const std::set<std::string>& allowed) const {
  for (const auto& name : names_) {
    if (!allowed.count(name)) {
      throw ValidationError("unknown placeholder {" + name + "} in prompt template");
    }
  }
}

}  // namespace ugcsim

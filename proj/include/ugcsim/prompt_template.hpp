#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ugcsim {

/// Plain-text template with `{name}` placeholders. `{{` and `}}` emit literal
/// braces. Rendering fails if any placeholder is left without a value.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  explicit PromptTemplate(std::string source);

  static PromptTemplate load(const std::filesystem::path& path);

  std::string render(const std::map<std::string, std::string>& values) const;

  const std::set<std::string>& placeholders() const { return names_; }
  const std::string& source() const { return source_; }

  /// Throws ValidationError if the template uses a name outside `allowed`.
  void require_subset_of(const std::set<std::string>& allowed) const;

 private:
  struct Piece {
    bool is_placeholder;
    std::string text;
  };
  std::string source_;
  std::vector<Piece> pieces_;
  std::set<std::string> names_;
};

}  // namespace ugcsim

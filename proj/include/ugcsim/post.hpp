#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace ugcsim {

using MetadataValue = std::variant<std::string, double, std::vector<std::string>>;

/// The piece of user-generated content introduced into the sandbox.
struct UgcPost {
  std::string id;
  std::string text;
  /// URI or caption text. Only the caption reaches text-only agents.
  std::optional<std::string> image_ref;
  /// Insertion-ordered metadata fields.
  std::vector<std::pair<std::string, MetadataValue>> metadata;
  std::optional<double> label;

  const MetadataValue* find(const std::string& key) const {
    for (const auto& [k, v] : metadata) {
      if (k == key) return &v;
    }
    return nullptr;
  }
};

/// Posts file: optional header line, then one JSON object per post.
std::vector<UgcPost> read_posts(const std::string& path);
UgcPost post_from_json_line(const std::string& line);
std::string post_to_json_line(const UgcPost& post);

}  // namespace ugcsim

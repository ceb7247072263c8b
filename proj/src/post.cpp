#include "ugcsim/post.hpp"

#include <fstream>

#include <json.hpp>

#include "ugcsim/error.hpp"

namespace ugcsim {

using nlohmann::ordered_json;

UgcPost post_from_json_line(const std::string& line) {
  UgcPost p;
  try {
    const auto j = ordered_json::parse(line);
    p.id = j.at("id").get<std::string>();
    p.text = j.value("text", "");
    if (j.contains("image_ref") && !j["image_ref"].is_null()) {
      p.image_ref = j["image_ref"].get<std::string>();
    }
    if (j.contains("metadata")) {
      for (const auto& [key, value] : j["metadata"].items()) {
        if (value.is_string()) {
          p.metadata.emplace_back(key, value.get<std::string>());
        } else if (value.is_number()) {
          p.metadata.emplace_back(key, value.get<double>());
        } else if (value.is_boolean()) {
          p.metadata.emplace_back(key, std::string(value.get<bool>() ? "yes" : "no"));
        } else if (value.is_array()) {
          std::vector<std::string> items;
          for (const auto& item : value) {
            items.push_back(item.is_string() ? item.get<std::string>() : item.dump());
          }
          p.metadata.emplace_back(key, std::move(items));
        } else if (!value.is_null()) {
          throw DataIntegrityError("metadata field '" + key + "' has an unsupported type");
        }
      }
    }
    if (j.contains("label") && !j["label"].is_null()) p.label = j["label"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataIntegrityError(std::string("malformed post record: ") + e.what());
  }
  if (p.id.empty()) throw DataIntegrityError("post record without an id");
  return p;
}

std::string post_to_json_line(const UgcPost& p) {
  ordered_json j = {{"id", p.id}, {"text", p.text}};
  if (p.image_ref) j["image_ref"] = *p.image_ref;
  ordered_json meta = ordered_json::object();
  for (const auto& [key, value] : p.metadata) {
    std::visit([&, &key = key](const auto& v) { meta[key] = v; }, value);
  }
  j["metadata"] = meta;
  if (p.label) j["label"] = *p.label;
  return j.dump();
}

std::vector<UgcPost> read_posts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read posts file " + path, "posts");
  std::vector<UgcPost> posts;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      const auto j = ordered_json::parse(line, nullptr, false);
      if (j.is_object() && j.contains("schema")) {
        if (j["schema"] != "ugcsim.posts") throw DataIntegrityError("not a posts file");
        continue;
      }
    }
    posts.push_back(post_from_json_line(line));
  }
  for (std::size_t i = 0; i < posts.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (posts[k].id == posts[i].id) {
        throw DataIntegrityError("duplicate post id '" + posts[i].id + "'");
      }
    }
  }
  return posts;
}

}  // namespace ugcsim

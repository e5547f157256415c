#pragma once

// JSON front end for CLI11's config-file support. Top-level keys are
// options of the main program; an object-valued key names a subcommand
// and holds that subcommand's options, e.g.
//   {"profile": "desk", "train": {"epochs": 5, "attention": false}}

#include <istream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "twofold/errors.hpp"

namespace twofold::cli {

class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::json out = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options({})) {
      if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
      const std::string key = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto& results = opt->results();
        out[key] = results.size() == 1 ? nlohmann::json(results.front()) : nlohmann::json(results);
      } else if (default_also && !opt->get_default_str().empty()) {
        out[key] = opt->get_default_str();
      }
    }
    return out.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json root;
    try {
      root = nlohmann::json::parse(input);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw FormatError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(root, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void flatten(const nlohmann::json& obj, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        std::vector<std::string> deeper = parents;
        deeper.push_back(key);
        flatten(value, deeper, items);
        continue;
      }
      if (value.is_null()) continue;
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

}  // namespace twofold::cli

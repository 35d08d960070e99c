#include "stress/config.hpp"

#include <fstream>
#include <set>

#include "stress/error.hpp"

namespace stress {

using nlohmann::json;

namespace {

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(path.empty() ? key : path + "." + key, "required field is missing");
  return *it;
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& path) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.contains(key)) throw ConfigError(path.empty() ? key : path + "." + key, "unknown field");
}

}  // namespace

SuiteConfig parse_suite_config(const json& j, const std::string& path) {
  SuiteConfig cfg = SuiteConfig::defaults();
  if (j.is_null()) return cfg;
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  reject_unknown_keys(j, {"severity", "levels"}, path);

  if (auto it = j.find("severity"); it != j.end()) {
    const std::string sp = path + ".severity";
    if (!it->is_object()) throw ConfigError(sp, "expected an object");
    reject_unknown_keys(*it, {"gamma_base", "contrast_base", "brightness_base", "sharpness_base",
                              "blur_sigma_step"},
                        sp);
    auto read = [&](const char* key, double& dst) {
      if (auto f = it->find(key); f != it->end()) dst = as_number(*f, sp + "." + key);
    };
    read("gamma_base", cfg.table.gamma_base);
    read("contrast_base", cfg.table.contrast_base);
    read("brightness_base", cfg.table.brightness_base);
    read("sharpness_base", cfg.table.sharpness_base);
    read("blur_sigma_step", cfg.table.blur_sigma_step);
  }

  if (auto it = j.find("levels"); it != j.end()) {
    const std::string lp = path + ".levels";
    if (!it->is_object()) throw ConfigError(lp, "expected an object keyed by kind");
    // Listing any kind restricts the suite to the listed kinds.
    for (auto k : kAllKinds) cfg.levels_for(k).clear();
    for (const auto& [key, value] : it->items()) {
      const auto kind = parse_kind(key);
      if (!kind) throw ConfigError(lp + "." + key, "unknown perturbation kind");
      if (!value.is_array()) throw ConfigError(lp + "." + key, "expected an array of levels");
      auto& levels = cfg.levels_for(*kind);
      for (std::size_t i = 0; i < value.size(); ++i) {
        const std::string ip = lp + "." + key + "[" + std::to_string(i) + "]";
        if (!value[i].is_number_integer()) throw ConfigError(ip, "expected an integer level");
        const int level = value[i].get<int>();
        if (!is_admissible(*kind, level))
          throw ConfigError(ip, "inadmissible level " + std::to_string(level));
        levels.push_back(level);
      }
    }
  }
  cfg.table.validate();
  return cfg;
}

json to_json(const SuiteConfig& suite) {
  json levels = json::object();
  for (auto k : kAllKinds) levels[std::string(kind_name(k))] = suite.levels_for(k);
  return {{"severity",
           {{"gamma_base", suite.table.gamma_base},
            {"contrast_base", suite.table.contrast_base},
            {"brightness_base", suite.table.brightness_base},
            {"sharpness_base", suite.table.sharpness_base},
            {"blur_sigma_step", suite.table.blur_sigma_step}}},
          {"levels", levels}};
}

std::vector<SubgroupDef> parse_subgroups(const json& j, const std::string& path) {
  std::vector<SubgroupDef> defs;
  if (j.is_null()) return defs;
  if (!j.is_array()) throw ConfigError(path, "expected an array");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    const auto& e = j[i];
    if (!e.is_object()) throw ConfigError(p, "expected an object");
    reject_unknown_keys(e, {"name", "attribute", "equals", "range"}, p);
    SubgroupDef def;
    def.name = as_string(require(e, "name", p), p + ".name");
    def.attribute = as_string(require(e, "attribute", p), p + ".attribute");
    const bool has_eq = e.contains("equals");
    const bool has_range = e.contains("range");
    if (has_eq == has_range) throw ConfigError(p, "exactly one of 'equals' or 'range' is required");
    if (has_eq) {
      const auto& v = e["equals"];
      if (v.is_string()) def.predicate = EqualsPredicate{v.get<std::string>()};
      else if (v.is_number()) def.predicate = EqualsPredicate{v.dump()};
      else throw ConfigError(p + ".equals", "expected a string or number");
    } else {
      const auto& r = e["range"];
      const std::string rp = p + ".range";
      if (!r.is_object()) throw ConfigError(rp, "expected an object");
      reject_unknown_keys(r, {"min", "max", "min_inclusive", "max_inclusive"}, rp);
      RangePredicate range;
      if (r.contains("min") && !r["min"].is_null()) range.lower = as_number(r["min"], rp + ".min");
      if (r.contains("max") && !r["max"].is_null()) range.upper = as_number(r["max"], rp + ".max");
      if (r.contains("min_inclusive")) {
        if (!r["min_inclusive"].is_boolean()) throw ConfigError(rp + ".min_inclusive", "expected a boolean");
        range.lower_inclusive = r["min_inclusive"].get<bool>();
      }
      if (r.contains("max_inclusive")) {
        if (!r["max_inclusive"].is_boolean()) throw ConfigError(rp + ".max_inclusive", "expected a boolean");
        range.upper_inclusive = r["max_inclusive"].get<bool>();
      }
      if (!range.lower && !range.upper) throw ConfigError(rp, "at least one of min/max is required");
      def.predicate = range;
    }
    defs.push_back(std::move(def));
  }
  return defs;
}

json to_json(const std::vector<SubgroupDef>& defs) {
  json out = json::array();
  for (const auto& d : defs) {
    json e = {{"name", d.name}, {"attribute", d.attribute}};
    if (const auto* eq = std::get_if<EqualsPredicate>(&d.predicate)) {
      e["equals"] = eq->value;
    } else {
      const auto& r = std::get<RangePredicate>(d.predicate);
      json rj = {{"min_inclusive", r.lower_inclusive}, {"max_inclusive", r.upper_inclusive}};
      rj["min"] = r.lower ? json(*r.lower) : json(nullptr);
      rj["max"] = r.upper ? json(*r.upper) : json(nullptr);
      e["range"] = rj;
    }
    out.push_back(e);
  }
  return out;
}

StudyConfig parse_study_config(const json& j) {
  if (!j.is_object()) throw ConfigError("", "config root must be an object");
  reject_unknown_keys(j, {"dataset", "classes", "attributes", "subgroups", "suite"}, "");
  StudyConfig cfg;
  if (auto it = j.find("dataset"); it != j.end()) cfg.dataset_name = as_string(*it, "dataset");

  const auto& classes = require(j, "classes", "");
  if (!classes.is_array() || classes.empty())
    throw ConfigError("classes", "expected a non-empty array of class names");
  std::set<std::string> unique;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto name = as_string(classes[i], "classes[" + std::to_string(i) + "]");
    if (!unique.insert(name).second)
      throw ConfigError("classes[" + std::to_string(i) + "]", "duplicate class '" + name + "'");
    cfg.schema.class_names.push_back(std::move(name));
  }

  if (auto it = j.find("attributes"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("attributes", "expected an array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string p = "attributes[" + std::to_string(i) + "]";
      const auto& e = (*it)[i];
      AttributeDecl decl;
      decl.name = as_string(require(e, "name", p), p + ".name");
      if (decl.name == "id" || decl.name == "image_path" || unique.contains(decl.name) ||
          !names.insert(decl.name).second)
        throw ConfigError(p + ".name", "attribute name '" + decl.name + "' collides with another column");
      const std::string type = e.contains("type") ? as_string(e["type"], p + ".type") : "string";
      if (type == "string") decl.type = AttributeType::String;
      else if (type == "number") decl.type = AttributeType::Number;
      else throw ConfigError(p + ".type", "expected 'string' or 'number'");
      cfg.schema.attributes.push_back(std::move(decl));
    }
  }

  cfg.subgroups = parse_subgroups(j.value("subgroups", json()), "subgroups");
  std::set<std::string> declared;
  for (const auto& a : cfg.schema.attributes) declared.insert(a.name);
  for (std::size_t i = 0; i < cfg.subgroups.size(); ++i)
    if (!declared.contains(cfg.subgroups[i].attribute))
      throw ConfigError("subgroups[" + std::to_string(i) + "].attribute",
                        "undeclared attribute '" + cfg.subgroups[i].attribute + "'");

  cfg.suite = parse_suite_config(j.value("suite", json()), "suite");
  return cfg;
}

StudyConfig load_study_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", path.string() + ": " + e.what());
  }
  return parse_study_config(j);
}

json to_json(const StudyConfig& cfg) {
  json attrs = json::array();
  for (const auto& a : cfg.schema.attributes)
    attrs.push_back({{"name", a.name}, {"type", a.type == AttributeType::Number ? "number" : "string"}});
  json out = {{"classes", cfg.schema.class_names},
              {"attributes", attrs},
              {"subgroups", to_json(cfg.subgroups)},
              {"suite", to_json(cfg.suite)}};
  if (!cfg.dataset_name.empty()) out["dataset"] = cfg.dataset_name;
  return out;
}

}  // namespace stress

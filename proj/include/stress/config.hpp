#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "stress/dataset.hpp"
#include "stress/perturb.hpp"

namespace stress {

// One declarative JSON file carries the manifest schema, subgroup
// definitions and perturbation suite. See docs/config.md for the schema.
struct StudyConfig {
  std::string dataset_name;
  ManifestSchema schema;
  std::vector<SubgroupDef> subgroups;
  SuiteConfig suite = SuiteConfig::defaults();
};

StudyConfig parse_study_config(const nlohmann::json& j);
StudyConfig load_study_config(const std::filesystem::path& path);
nlohmann::json to_json(const StudyConfig& cfg);

SuiteConfig parse_suite_config(const nlohmann::json& j, const std::string& path = "suite");
nlohmann::json to_json(const SuiteConfig& suite);

std::vector<SubgroupDef> parse_subgroups(const nlohmann::json& j,
                                         const std::string& path = "subgroups");
nlohmann::json to_json(const std::vector<SubgroupDef>& defs);

}  // namespace stress

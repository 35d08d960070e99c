#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace stress {

enum class AttributeType { String, Number };

struct AttributeDecl {
  std::string name;
  AttributeType type = AttributeType::String;
  friend bool operator==(const AttributeDecl&, const AttributeDecl&) = default;
};

// Class list plus attribute declarations a manifest must follow.
struct ManifestSchema {
  std::vector<std::string> class_names;
  std::vector<AttributeDecl> attributes;
};

// monostate marks an unknown (missing) value.
using AttributeValue = std::variant<std::monostate, std::string, double>;

inline bool is_known(const AttributeValue& v) noexcept {
  return !std::holds_alternative<std::monostate>(v);
}

struct SampleRecord {
  std::string id;
  std::string image_path;  // as written in the manifest
  std::vector<std::uint8_t> labels;
  std::map<std::string, AttributeValue> attributes;
  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct Dataset {
  std::string name;
  std::vector<std::string> class_names;
  std::vector<AttributeDecl> attributes;
  std::vector<SampleRecord> samples;
  // Directory relative image paths are resolved against.
  std::filesystem::path base_dir;

  std::size_t n_classes() const noexcept { return class_names.size(); }
  std::size_t size() const noexcept { return samples.size(); }
  std::filesystem::path image_file(std::size_t i) const;
  const AttributeDecl* find_attribute(const std::string& name) const noexcept;

  // Content equality (ignores base_dir).
  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.name == b.name && a.class_names == b.class_names && a.attributes == b.attributes &&
           a.samples == b.samples;
  }
};

// Manifest CSV: id, image_path, one 0/1 column per class (schema order),
// then the declared attribute columns in any order. Missing attribute
// values (empty, NA, unknown) load as unknown; missing labels are errors.
Dataset load_manifest(const std::filesystem::path& path, const ManifestSchema& schema,
                      std::string name = {});
void write_manifest(const Dataset& ds, const std::filesystem::path& path);

struct EqualsPredicate {
  std::string value;
  friend bool operator==(const EqualsPredicate&, const EqualsPredicate&) = default;
};

struct RangePredicate {
  std::optional<double> lower;
  std::optional<double> upper;
  bool lower_inclusive = true;
  bool upper_inclusive = false;
  friend bool operator==(const RangePredicate&, const RangePredicate&) = default;
};

struct SubgroupDef {
  std::string name;
  std::string attribute;
  std::variant<EqualsPredicate, RangePredicate> predicate;

  // True iff the value is known and satisfies the predicate.
  bool matches(const AttributeValue& value) const;
  friend bool operator==(const SubgroupDef&, const SubgroupDef&) = default;
};

inline constexpr std::string_view kAllGroup = "All";

struct SubgroupPartition {
  struct Group {
    std::string name;
    std::vector<std::size_t> indices;
    std::size_t excluded_unknown = 0;
  };
  // groups[0] is always "All".
  std::vector<Group> groups;

  const Group* find(const std::string& name) const noexcept;
};

// Throws ConfigError when a definition references an undeclared attribute
// or uses a predicate incompatible with the attribute type.
SubgroupPartition resolve_subgroups(const std::vector<SubgroupDef>& defs, const Dataset& ds);

struct ValidationReport {
  std::vector<std::size_t> positives_per_class;
  std::map<std::string, std::map<std::string, std::size_t>> attribute_histograms;
  std::vector<std::string> warnings;
  std::vector<std::string> missing_files;
};

ValidationReport validate(const Dataset& ds, bool check_files = false);

// Attribute value as written to a manifest ("" for unknown).
std::string attribute_to_string(const AttributeValue& v);

}  // namespace stress

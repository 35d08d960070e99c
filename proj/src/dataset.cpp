#include "stress/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "stress/csv.hpp"
#include "stress/error.hpp"
#include "stress/format.hpp"

namespace stress {

namespace fs = std::filesystem;

namespace {

bool is_missing(std::string_view s) {
  std::string lower;
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return lower.empty() || lower == "na" || lower == "unknown";
}

}  // namespace

fs::path Dataset::image_file(std::size_t i) const {
  fs::path p = samples.at(i).image_path;
  return p.is_absolute() ? p : base_dir / p;
}

const AttributeDecl* Dataset::find_attribute(const std::string& attr) const noexcept {
  for (const auto& a : attributes)
    if (a.name == attr) return &a;
  return nullptr;
}

std::string attribute_to_string(const AttributeValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  if (const auto* d = std::get_if<double>(&v)) return format_double(*d);
  return {};
}

Dataset load_manifest(const fs::path& path, const ManifestSchema& schema, std::string name) {
  if (schema.class_names.empty()) throw ConfigError("classes", "at least one class is required");
  std::vector<std::size_t> lines;
  const auto rows = csv::read_file(path.string(), &lines);
  if (rows.empty()) throw ManifestError(1, path.string() + ": empty manifest");

  const auto& header = rows.front();
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!col.emplace(header[i], i).second)
      throw ManifestError(1, "duplicate column '" + header[i] + "'");
  }
  if (header.size() < 2 || header[0] != "id" || header[1] != "image_path")
    throw ManifestError(1, "header must start with id,image_path");
  for (std::size_t c = 0; c < schema.class_names.size(); ++c) {
    if (header.size() <= 2 + c || header[2 + c] != schema.class_names[c])
      throw ManifestError(1, "expected class column '" + schema.class_names[c] + "' at position " +
                                 std::to_string(3 + c));
  }
  std::set<std::string> expected;
  for (const auto& a : schema.attributes) expected.insert(a.name);
  for (std::size_t i = 2 + schema.class_names.size(); i < header.size(); ++i)
    if (!expected.contains(header[i]))
      throw ManifestError(1, "undeclared column '" + header[i] + "'");
  for (const auto& a : schema.attributes)
    if (!col.contains(a.name)) throw ManifestError(1, "missing attribute column '" + a.name + "'");

  Dataset ds;
  ds.name = std::move(name);
  ds.class_names = schema.class_names;
  ds.attributes = schema.attributes;
  ds.base_dir = path.parent_path();

  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t line = lines[r];
    if (row.size() != header.size())
      throw ManifestError(line, "expected " + std::to_string(header.size()) + " fields, got " +
                                    std::to_string(row.size()));
    SampleRecord s;
    s.id = row[0];
    s.image_path = row[1];
    if (s.id.empty()) throw ManifestError(line, "empty id");
    if (!seen.insert(s.id).second) throw ManifestError(line, "duplicate id '" + s.id + "'");
    for (std::size_t c = 0; c < schema.class_names.size(); ++c) {
      const auto& v = row[2 + c];
      if (v == "0") s.labels.push_back(0);
      else if (v == "1") s.labels.push_back(1);
      else if (v.empty())
        throw ManifestError(line, "missing label for class '" + schema.class_names[c] + "'");
      else
        throw ManifestError(line, "label for class '" + schema.class_names[c] +
                                      "' must be 0 or 1, got '" + v + "'");
    }
    for (const auto& a : schema.attributes) {
      const auto& raw = row[col.at(a.name)];
      if (is_missing(raw)) {
        s.attributes[a.name] = std::monostate{};
      } else if (a.type == AttributeType::Number) {
        auto v = parse_double(raw);
        if (!v) throw ManifestError(line, "attribute '" + a.name + "' is not numeric: '" + raw + "'");
        s.attributes[a.name] = *v;
      } else {
        s.attributes[a.name] = raw;
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void write_manifest(const Dataset& ds, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  csv::Row header = {"id", "image_path"};
  header.insert(header.end(), ds.class_names.begin(), ds.class_names.end());
  for (const auto& a : ds.attributes) header.push_back(a.name);
  csv::write_row(out, header);
  for (const auto& s : ds.samples) {
    csv::Row row = {s.id, s.image_path};
    for (auto l : s.labels) row.push_back(l ? "1" : "0");
    for (const auto& a : ds.attributes) {
      auto it = s.attributes.find(a.name);
      row.push_back(it == s.attributes.end() ? std::string() : attribute_to_string(it->second));
    }
    csv::write_row(out, row);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

bool SubgroupDef::matches(const AttributeValue& value) const {
  if (!is_known(value)) return false;
  if (const auto* eq = std::get_if<EqualsPredicate>(&predicate)) {
    if (const auto* s = std::get_if<std::string>(&value)) return *s == eq->value;
    const auto target = parse_double(eq->value);
    return target && *target == std::get<double>(value);
  }
  const auto& range = std::get<RangePredicate>(predicate);
  const auto* d = std::get_if<double>(&value);
  if (!d) return false;
  if (range.lower && (range.lower_inclusive ? *d < *range.lower : *d <= *range.lower)) return false;
  if (range.upper && (range.upper_inclusive ? *d > *range.upper : *d >= *range.upper)) return false;
  return true;
}

const SubgroupPartition::Group* SubgroupPartition::find(const std::string& name) const noexcept {
  for (const auto& g : groups)
    if (g.name == name) return &g;
  return nullptr;
}

SubgroupPartition resolve_subgroups(const std::vector<SubgroupDef>& defs, const Dataset& ds) {
  SubgroupPartition part;
  SubgroupPartition::Group all{std::string(kAllGroup), {}, 0};
  all.indices.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) all.indices[i] = i;
  part.groups.push_back(std::move(all));

  std::set<std::string> names{std::string(kAllGroup)};
  for (std::size_t d = 0; d < defs.size(); ++d) {
    const auto& def = defs[d];
    const std::string field = "subgroups[" + std::to_string(d) + "]";
    if (def.name.empty()) throw ConfigError(field + ".name", "subgroup name is empty");
    if (!names.insert(def.name).second)
      throw ConfigError(field + ".name", "duplicate or reserved subgroup name '" + def.name + "'");
    const auto* decl = ds.find_attribute(def.attribute);
    if (!decl)
      throw ConfigError(field + ".attribute", "undeclared attribute '" + def.attribute + "'");
    if (std::holds_alternative<RangePredicate>(def.predicate) && decl->type != AttributeType::Number)
      throw ConfigError(field + ".range", "range predicate needs a numeric attribute");
    if (const auto* eq = std::get_if<EqualsPredicate>(&def.predicate);
        eq && decl->type == AttributeType::Number && !parse_double(eq->value))
      throw ConfigError(field + ".equals", "value must be numeric for attribute '" + def.attribute + "'");

    SubgroupPartition::Group g{def.name, {}, 0};
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto it = ds.samples[i].attributes.find(def.attribute);
      const AttributeValue value =
          it == ds.samples[i].attributes.end() ? AttributeValue{} : it->second;
      if (!is_known(value)) {
        ++g.excluded_unknown;
      } else if (def.matches(value)) {
        g.indices.push_back(i);
      }
    }
    part.groups.push_back(std::move(g));
  }
  return part;
}

ValidationReport validate(const Dataset& ds, bool check_files) {
  ValidationReport rep;
  rep.positives_per_class.assign(ds.n_classes(), 0);
  for (const auto& s : ds.samples)
    for (std::size_t c = 0; c < ds.n_classes() && c < s.labels.size(); ++c)
      rep.positives_per_class[c] += s.labels[c];
  for (std::size_t c = 0; c < ds.n_classes(); ++c) {
    if (rep.positives_per_class[c] == 0)
      rep.warnings.push_back("class '" + ds.class_names[c] + "' has no positive samples; AUC undefined");
    else if (rep.positives_per_class[c] == ds.size())
      rep.warnings.push_back("class '" + ds.class_names[c] + "' has no negative samples; AUC undefined");
  }
  for (const auto& a : ds.attributes) {
    auto& hist = rep.attribute_histograms[a.name];
    for (const auto& s : ds.samples) {
      const auto it = s.attributes.find(a.name);
      const bool known = it != s.attributes.end() && is_known(it->second);
      ++hist[known ? attribute_to_string(it->second) : std::string("unknown")];
    }
  }
  if (check_files) {
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (!fs::is_regular_file(ds.image_file(i))) rep.missing_files.push_back(ds.image_file(i).string());
  }
  return rep;
}

}  // namespace stress

#include <gtest/gtest.h>

#include "stress/config.hpp"
#include "stress/dataset.hpp"
#include "stress/error.hpp"
#include "support.hpp"

using namespace stress;
using nlohmann::json;
using testing_support::TempDir;
using testing_support::write_file;

namespace {

ManifestSchema schema() {
  return {{"effusion", "no_finding"}, {{"race", AttributeType::String}, {"age", AttributeType::Number}}};
}

const char* kManifest =
    "id,image_path,effusion,no_finding,age,race\n"
    "a,img/a.png,1,0,34,White\n"
    "b,img/b.png,0,1,71,Asian\n"
    "c,img/c.png,0,0,NA,Black\n"
    "d,/abs/d.png,1,1,55,\n";

std::string config_error_field(const json& j) {
  try {
    parse_study_config(j);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<no error>";
}

}  // namespace

TEST(Manifest, LoadsLabelsAndAttributes) {
  TempDir dir;
  write_file(dir / "m.csv", kManifest);
  const auto ds = load_manifest(dir / "m.csv", schema(), "toy");
  ASSERT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.name, "toy");
  EXPECT_EQ(ds.samples[0].labels, (std::vector<std::uint8_t>{1, 0}));
  EXPECT_EQ(std::get<double>(ds.samples[1].attributes.at("age")), 71.0);
  EXPECT_EQ(std::get<std::string>(ds.samples[2].attributes.at("race")), "Black");
  EXPECT_FALSE(is_known(ds.samples[2].attributes.at("age")));
  EXPECT_FALSE(is_known(ds.samples[3].attributes.at("race")));
  EXPECT_EQ(ds.image_file(0), dir.path() / "img/a.png");
  EXPECT_EQ(ds.image_file(3), std::filesystem::path("/abs/d.png"));
}

TEST(Manifest, WriteThenLoadRoundTrips) {
  TempDir dir;
  write_file(dir / "m.csv", kManifest);
  const auto ds = load_manifest(dir / "m.csv", schema(), "toy");
  write_manifest(ds, dir / "copy.csv");
  EXPECT_EQ(load_manifest(dir / "copy.csv", schema(), "toy"), ds);
}

TEST(Manifest, RowErrorsCarryTheRowNumber) {
  TempDir dir;
  const std::string header = "id,image_path,effusion,no_finding,age,race\n";
  struct Case {
    std::string body;
    std::size_t row;
  };
  const std::vector<Case> cases = {
      {"a,x.png,1,0,3,W\nb,y.png,2,0,3,W\n", 3},
      {"a,x.png,1,0,3,W\nb,y.png,,0,3,W\n", 3},
      {"a,x.png,1,0,3,W\na,y.png,0,0,3,W\n", 3},
      {"a,x.png,1,0,old,W\n", 2},
  };
  for (const auto& c : cases) {
    write_file(dir / "bad.csv", header + c.body);
    try {
      load_manifest(dir / "bad.csv", schema());
      ADD_FAILURE() << "no error for " << c.body;
    } catch (const ManifestError& e) {
      EXPECT_EQ(e.row(), c.row) << c.body;
    }
  }
}

TEST(Manifest, HeaderMustFollowSchema) {
  TempDir dir;
  write_file(dir / "a.csv", "id,image_path,no_finding,effusion,age,race\n");
  EXPECT_THROW(load_manifest(dir / "a.csv", schema()), ManifestError);
  write_file(dir / "b.csv", "id,image_path,effusion,no_finding,age\n");
  EXPECT_THROW(load_manifest(dir / "b.csv", schema()), ManifestError);
  EXPECT_THROW(load_manifest(dir / "missing.csv", schema()), IoError);
}

TEST(Subgroups, PredicatesAndUnknownExclusion) {
  TempDir dir;
  write_file(dir / "m.csv", kManifest);
  const auto ds = load_manifest(dir / "m.csv", schema());
  const std::vector<SubgroupDef> defs = {
      {"White", "race", EqualsPredicate{"White"}},
      {"under60", "age", RangePredicate{std::nullopt, 60.0, true, false}},
      {"over55", "age", RangePredicate{55.0, std::nullopt, false, true}},
  };
  const auto p = resolve_subgroups(defs, ds);
  ASSERT_EQ(p.groups.size(), 4u);
  EXPECT_EQ(p.groups[0].name, "All");
  EXPECT_EQ(p.groups[0].indices.size(), 4u);
  EXPECT_EQ(p.find("White")->indices, (std::vector<std::size_t>{0}));
  EXPECT_EQ(p.find("White")->excluded_unknown, 1u);
  EXPECT_EQ(p.find("under60")->indices, (std::vector<std::size_t>{0, 3}));
  EXPECT_EQ(p.find("under60")->excluded_unknown, 1u);
  EXPECT_EQ(p.find("over55")->indices, (std::vector<std::size_t>{1}));
}

TEST(Subgroups, DefinitionErrors) {
  TempDir dir;
  write_file(dir / "m.csv", kManifest);
  const auto ds = load_manifest(dir / "m.csv", schema());
  EXPECT_THROW(resolve_subgroups({{"x", "sex", EqualsPredicate{"F"}}}, ds), ConfigError);
  EXPECT_THROW(resolve_subgroups({{"x", "race", RangePredicate{1.0, 2.0}}}, ds), ConfigError);
  EXPECT_THROW(resolve_subgroups({{"All", "race", EqualsPredicate{"W"}}}, ds), ConfigError);
  EXPECT_THROW(resolve_subgroups({{"a", "race", EqualsPredicate{"W"}}, {"a", "race", EqualsPredicate{"B"}}}, ds),
               ConfigError);
}

TEST(Validate, ReportsCountsAndMissingFiles) {
  TempDir dir;
  write_file(dir / "m.csv", kManifest);
  write_file(dir / "img/a.png", "x");
  const auto ds = load_manifest(dir / "m.csv", schema());
  const auto rep = validate(ds, true);
  EXPECT_EQ(rep.positives_per_class, (std::vector<std::size_t>{2, 2}));
  EXPECT_EQ(rep.attribute_histograms.at("race").at("White"), 1u);
  EXPECT_EQ(rep.missing_files.size(), 3u);
  EXPECT_TRUE(validate(ds, false).missing_files.empty());
}

TEST(StudyConfig, ParsesAndRoundTrips) {
  const json j = json::parse(R"({
    "dataset": "toy",
    "classes": ["effusion", "no_finding"],
    "attributes": [{"name": "race"}, {"name": "age", "type": "number"}],
    "subgroups": [
      {"name": "White", "attribute": "race", "equals": "White"},
      {"name": "young", "attribute": "age", "range": {"max": 40}}
    ],
    "suite": {"severity": {"gamma_base": 1.6}, "levels": {"gamma": [-2, 2], "blur": [2]}}
  })");
  const auto cfg = parse_study_config(j);
  EXPECT_EQ(cfg.dataset_name, "toy");
  EXPECT_EQ(cfg.schema.attributes[1].type, AttributeType::Number);
  EXPECT_EQ(cfg.subgroups.size(), 2u);
  EXPECT_DOUBLE_EQ(cfg.suite.table.gamma_base, 1.6);
  EXPECT_EQ(build_suite(cfg.suite).size(), 3u);
  const auto again = parse_study_config(to_json(cfg));
  EXPECT_EQ(again.subgroups, cfg.subgroups);
  EXPECT_EQ(again.suite, cfg.suite);
  EXPECT_EQ(again.schema.class_names, cfg.schema.class_names);
}

TEST(StudyConfig, DefaultsToFullSuite) {
  const auto cfg = parse_study_config(json::parse(R"({"classes": ["a"]})"));
  EXPECT_EQ(build_suite(cfg.suite).size(), 30u);
}

TEST(StudyConfig, ErrorsNameTheField) {
  EXPECT_EQ(config_error_field(json::parse(R"({})")), "classes");
  EXPECT_EQ(config_error_field(json::parse(R"({"classes": ["a"], "colour": 1})")), "colour");
  EXPECT_EQ(config_error_field(json::parse(R"({"classes": ["a", "a"]})")), "classes[1]");
  EXPECT_EQ(config_error_field(json::parse(R"({"classes": ["a"], "suite": {"levels": {"gamma": [0]}}})")),
            "suite.levels.gamma[0]");
  EXPECT_EQ(config_error_field(json::parse(R"({"classes": ["a"], "suite": {"levels": {"fog": [1]}}})")),
            "suite.levels.fog");
  EXPECT_EQ(config_error_field(json::parse(R"({"classes": ["a"], "suite": {"severity": {"blur_sigma_step": -1}}})")),
            "suite.severity.blur_sigma_step");
  EXPECT_EQ(config_error_field(json::parse(
                R"({"classes": ["a"], "subgroups": [{"name": "x", "attribute": "race", "equals": "W"}]})")),
            "subgroups[0].attribute");
  EXPECT_EQ(config_error_field(json::parse(R"({"classes": ["a"], "attributes": [{"name": "r"}],
                "subgroups": [{"name": "x", "attribute": "r"}]})")),
            "subgroups[0]");
}

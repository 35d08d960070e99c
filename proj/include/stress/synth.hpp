#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stress/config.hpp"
#include "stress/dataset.hpp"
#include "stress/image.hpp"

namespace stress {

// One categorical attribute and the share of samples taking each value.
struct AttributeSpec {
  std::string name;
  std::vector<std::pair<std::string, double>> proportions;
};

// Parses "race=White:0.5,Asian:0.3,Black:0.2".
AttributeSpec parse_attribute_spec(std::string_view text);

struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t n = 100;
  std::vector<std::string> class_names = {"class0", "class1"};
  std::vector<AttributeSpec> attributes = {
      {"race", {{"White", 0.5}, {"Asian", 0.3}, {"Black", 0.2}}},
      {"sex", {{"Female", 0.5}, {"Male", 0.5}}}};
  double separability = 0.3;
  double prevalence = 0.5;
  int size = 64;
  std::string dataset_name = "synthetic";

  // Throws InvalidParameter.
  void validate() const;
  nlohmann::json to_json() const;
};

// Largest-remainder apportionment of n items; ties go to the earlier entry.
// Throws InvalidParameter unless proportions are >= 0 and sum to 1.
std::vector<std::size_t> largest_remainder(const std::vector<double>& proportions, std::size_t n);

// Latent class scores: positives s + (1-s)u, negatives (1-s)u with u on a
// stratified grid. The population AUC of that construction.
double synth_auc(double separability);

struct SynthOutput {
  SynthConfig config;
  Dataset dataset;
  StudyConfig study;
  std::vector<ImageBuffer> images;  // dataset order
  // Per sample and class: latent score z and degradation noise. Noise is
  // drawn below 0.5 for positives and above 0.5 for negatives, so mixing it
  // in can only swap correctly ordered pairs.
  std::vector<std::vector<double>> latent;
  std::vector<std::vector<double>> noise;
  // Patch geometry per class: top, left, side.
  std::vector<std::array<int, 3>> patches;

  nlohmann::json stub_json() const;
};

SynthOutput generate_synth(const SynthConfig& config);

// manifest.csv, config.json, stub.json, synth.json and images/<id>.png.
void write_synth(const SynthOutput& out, const std::filesystem::path& dir);

}  // namespace stress
